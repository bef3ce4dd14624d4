"""Exception types shared by the optimizers and execution engines."""


class EvaluationError(RuntimeError):
    """A fitness evaluation failed. Carries the coordinates of the failing sample."""

    def __init__(self, message, process=None, iteration=None, sample=None):
        super().__init__(message)
        self.process = process
        self.iteration = iteration
        self.sample = sample

    def location(self):
        return f"process={self.process} iteration={self.iteration} sample={self.sample}"


class BudgetExhausted(RuntimeError):
    """No further generation fits in the remaining evaluation budget."""


class ConfigError(ValueError):
    """Experiment configuration rejected. `errors` lists every violation as {"field", "msg"}."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(f"{e['field']}: {e['msg']}" for e in self.errors))
