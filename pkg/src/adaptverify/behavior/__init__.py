"""Process derivation, LTS expansion and behavioural checks."""

from .checks import (
    AlwaysEventually, Eventually, Verdict, check_assertion, check_refinement, check_safety,
    check_temporal, lts_refines,
)
from .lts import DEFAULT_STATE_CAP, Lts, Transition, expand_lts, lts_to_dot, lts_to_text
from .process import (
    TAU, Call, ChanRecv, ChanSend, Choice, Parallel, Prefix, ProcessDefs, SeqComp, Skip, Stop,
    Term, choice, derive_process_defs, format_csp, format_term, is_tau, parallel, parse_csp, seq,
)

__all__ = [
    "AlwaysEventually", "Call", "ChanRecv", "ChanSend", "Choice", "DEFAULT_STATE_CAP", "Eventually",
    "Lts", "Parallel", "Prefix", "ProcessDefs", "SeqComp", "Skip", "Stop", "TAU", "Term",
    "Transition", "Verdict", "check_assertion", "check_refinement", "check_safety",
    "check_temporal", "choice", "derive_process_defs", "expand_lts", "format_csp", "format_term",
    "is_tau", "lts_refines", "lts_to_dot", "lts_to_text", "parallel", "parse_csp", "seq",
]
