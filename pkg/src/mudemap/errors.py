"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Raised when a configuration value or shape violates a contract."""


class TrainingDiverged(RuntimeError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, iteration: int, lr: float):
        super().__init__(f"loss became non-finite at iteration {iteration} (lr={lr})")
        self.iteration = iteration
        self.lr = lr
