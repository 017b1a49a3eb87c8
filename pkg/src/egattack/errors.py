"""Exception hierarchy. Every error carries the pipeline stage it came from."""


class EgAttackError(Exception):
    module = "egattack"

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class DataError(EgAttackError, ValueError):
    module = "data_pipeline"


class ModelError(EgAttackError, ValueError):
    module = "model_zoo"


class NotFittedError(ModelError):
    pass


class ExplainerError(EgAttackError, ValueError):
    module = "explainers"


class AttackError(EgAttackError, ValueError):
    module = "attack_engine"


class ReportError(EgAttackError, ValueError):
    module = "evaluation"


class ConfigError(EgAttackError, ValueError):
    module = "cli_runner"


class ConvergenceWarning(UserWarning):
    pass
