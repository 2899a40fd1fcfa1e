"""Exception hierarchy.

Everything raised on bad user input derives from InputError so the CLI can map
it to exit code 2 without knowing the individual classes.
"""


class PlastarError(Exception):
    pass


class InputError(PlastarError):
    pass


# trees
class EmptyTree(InputError):
    pass


class MultipleRoots(InputError):
    pass


class Cycle(InputError):
    pass


class DanglingParent(InputError):
    pass


class InvalidId(InputError):
    pass


class BadConfig(InputError):
    pass


# logic
class FormulaSyntaxError(InputError):
    def __init__(self, position: int, expected: str, text: str = ""):
        self.position = position
        self.expected = expected
        snippet = text[position:position + 20] if text else ""
        super().__init__(f"at position {position}: expected {expected}, got {snippet!r}")


class UnknownSymbol(InputError):
    pass


class ArityMismatch(InputError):
    pass


class RebindingBoundVar(InputError):
    pass


class UnboundVariable(InputError):
    pass


class SignatureMismatch(InputError):
    pass


class BadParameters(InputError):
    pass


# closure types
class TooManyVariables(InputError):
    pass


class NotDecomposable(InputError):
    pass


class InvalidType(InputError):
    pass


# network
class CyclicDependency(InputError):
    pass


class IllegalSymbolInTheta(InputError):
    pass


class TooLarge(InputError):
    pass


class NotZeroOne(InputError):
    pass


# elimination
class NotClosureBasic(InputError):
    pass


class UnsatisfiablePair(InputError):
    pass


class PositivityUnknown(InputError):
    pass


class UnsupportedAggregation(InputError):
    pass


class CatalogOverflow(InputError):
    pass


# harness
class DanglingNode(InputError):
    pass
