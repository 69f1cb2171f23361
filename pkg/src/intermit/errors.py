"""Exception hierarchy shared by every stage of the analyzer."""


class IntermitError(Exception):
    """Base class for all analyzer errors."""


# distribution algebra

class DistError(IntermitError, ValueError):
    pass


class GridOverflow(DistError):
    pass


class EmptyMixture(DistError):
    pass


class WeightSumOutOfTolerance(DistError):
    pass


class InvalidProbability(DistError):
    pass


# program representation

class IRError(IntermitError):
    pass


class EtirSyntaxError(IRError):
    def __init__(self, line, col, message):
        self.line = line
        self.col = col
        self.message = message
        super().__init__(f"{line}:{col}: {message}")


class UnresolvedReference(IRError):
    def __init__(self, name, where=""):
        self.name = name
        self.where = where
        msg = f"unresolved reference {name!r}"
        if where:
            msg += f" in {where}"
        super().__init__(msg)


class RecursionDetected(IRError):
    def __init__(self, cycle):
        self.cycle = tuple(cycle)
        super().__init__("recursive call chain: " + " -> ".join(self.cycle))


class NonAffineExpression(IRError):
    pass


class UnsupportedProgram(IRError):
    """The program uses a construct the analysis rejects (e.g. checkpoints in callees)."""


# cost models

class CostModelError(IntermitError):
    pass


class SchemaError(CostModelError):
    pass


class MissingCheckpointCosts(CostModelError):
    pass


class UnknownCostClass(CostModelError):
    def __init__(self, class_id):
        self.class_id = class_id
        super().__init__(f"unknown cost class {class_id!r}")


# analysis / reporting

class EmptyPathSet(IntermitError):
    pass


class LabelNotOnAnyPath(IntermitError):
    pass


class EmptySample(IntermitError):
    pass


class ConfigError(IntermitError):
    pass


class UnsplittableBlock(CostModelError):
    """A single instruction exceeds the outlier threshold on its own."""

    def __init__(self, function, block, instr_index, mean_energy, threshold):
        self.function = function
        self.block = block
        self.instr_index = instr_index
        self.mean_energy = mean_energy
        self.threshold = threshold
        super().__init__(
            f"{function}.{block}: instruction {instr_index} alone has mean energy "
            f"{mean_energy:.6g} nJ above the split threshold {threshold:.6g} nJ")


class NonTerminatingProgram(IntermitError):
    """No explored path of the function can complete under the energy config."""

    def __init__(self, warnings=()):
        self.warnings = list(warnings)
        msg = "no path can complete on the configured capacitor"
        if self.warnings:
            msg += f" ({len(self.warnings)} non-terminating regions, first: {self.warnings[0]})"
        super().__init__(msg)
