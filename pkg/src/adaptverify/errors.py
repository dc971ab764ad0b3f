"""Exception hierarchy shared by all modules.

Every error carries enough context to be reported on one stderr line by the CLI.
"""

from __future__ import annotations


class AdaptVerifyError(Exception):
    """Base class for all library errors."""


class InputError(AdaptVerifyError):
    """Malformed or inconsistent input (CLI exit code 3)."""


class NumericError(AdaptVerifyError):
    """A numerical procedure failed (CLI exit code 4)."""


# goalmodel

class ModelSyntaxError(InputError):
    def __init__(self, line: int, message: str):
        super().__init__(f"line {line}: {message}")
        self.line = line
        self.message = message


class UnresolvedReference(InputError):
    def __init__(self, ref: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}unresolved reference '{ref}'")
        self.ref = ref
        self.line = line


class DuplicateId(InputError):
    def __init__(self, ident: str, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}duplicate id '{ident}'")
        self.ident = ident
        self.line = line


class FPOutOfRange(InputError):
    def __init__(self, value: float, line: int | None = None):
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}failure probability {value} outside [0, 1]")
        self.value = value
        self.line = line


class ExpressionError(InputError):
    pass


class MissingTag(InputError):
    def __init__(self, task: str, context: str, option: str | None = None):
        opt = f" option={option}" if option else ""
        super().__init__(f"no tag for task '{task}' in context '{context}'{opt}")
        self.task = task
        self.context = context
        self.option = option


class MissingParameter(InputError):
    def __init__(self, name: str):
        super().__init__(f"parameter '{name}' has no value in this assignment")
        self.name = name


# behavior

class UnboundChannel(InputError):
    def __init__(self, channel: str):
        super().__init__(f"channel '{channel}' is not bound by any parallel composition")
        self.channel = channel


class UndefinedProcess(InputError):
    def __init__(self, name: str):
        super().__init__(f"undefined process '{name}'")
        self.name = name


class UnguardedRecursion(InputError):
    def __init__(self, name: str):
        super().__init__(f"unguarded recursion through process '{name}'")
        self.name = name


class StateExplosion(AdaptVerifyError):
    def __init__(self, cap: int):
        super().__init__(f"state space exceeds the cap of {cap} states")
        self.cap = cap


# dtmc / ctmc

class UnsupportedPattern(InputError):
    pass


class InvalidAssignment(InputError):
    pass


class IncompleteAssignment(InvalidAssignment):
    pass


class UnknownOption(InvalidAssignment):
    pass


class UnlabeledTransition(UnsupportedPattern):
    pass


class NonStochasticModel(NumericError):
    pass


class NonTerminatingRun(NumericError):
    def __init__(self, cap: int):
        super().__init__(f"simulation runs did not terminate within {cap} steps")
        self.cap = cap


class NoConvergence(NumericError):
    def __init__(self, iterations: int, residual: float):
        super().__init__(f"iteration did not converge after {iterations} sweeps (residual {residual:.3e})")
        self.iterations = iterations
        self.residual = residual


class MissingTimeCost(InputError):
    def __init__(self, task: str):
        super().__init__(f"task '{task}' has no usable time cost")
        self.task = task


class ZeroTimeCost(InputError):
    def __init__(self, task: str):
        super().__init__(f"task '{task}' has a non-positive time cost")
        self.task = task


class DivergentReward(NumericError):
    def __init__(self, state: int):
        super().__init__(f"target is not reached almost surely from state {state}; reward diverges")
        self.state = state


class FormulaError(InputError):
    pass


class UnsupportedOperator(FormulaError):
    pass


class UnknownAtom(FormulaError):
    def __init__(self, atom: str):
        super().__init__(f"unknown atomic proposition '{atom}'")
        self.atom = atom


class NoEntryStates(FormulaError):
    def __init__(self, atom: str):
        super().__init__(f"no reachable state is labelled '{atom}'")
        self.atom = atom


# decision

class EmptyDomain(InputError):
    pass


class NoSurvivors(AdaptVerifyError):
    def __init__(self, message: str = "no candidate satisfies every requirement"):
        super().__init__(message)
