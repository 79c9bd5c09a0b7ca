"""Exception hierarchy shared by all modules."""


class MforgeError(Exception):
    pass


class GenerationTooDeep(MforgeError):
    pass


class BudgetExceeded(MforgeError):
    def __init__(self, generation, log2_count, budget):
        self.generation = generation
        self.log2_count = log2_count
        self.budget = budget
        super().__init__(
            f"enumerating generation {generation} needs ~2^{log2_count:.2f} "
            f"cylinders, budget is {budget}"
        )


class NotHalfSupported(MforgeError):
    pass


class NotPrimitive(MforgeError):
    pass


class Degenerate(MforgeError):
    pass


class Inadmissible(MforgeError):
    pass


class Unreachable(MforgeError):
    def __init__(self, message, required_memory=None, label=None):
        self.required_memory = required_memory
        self.label = label
        super().__init__(message)


class OverflowFaithful(MforgeError):
    pass


class InadmissiblePrefix(MforgeError):
    pass


class BackendMismatch(MforgeError):
    pass


class ZeroMass(MforgeError):
    pass


class NoFixedPoint(MforgeError):
    pass
