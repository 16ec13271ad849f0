"""Exception hierarchy. Everything raised for bad input derives from DomainError."""


class DomainError(ValueError):
    pass


class DatasetError(DomainError):
    pass


class RankingError(DomainError):
    pass


class SeedError(DomainError):
    pass


class ModelError(DomainError):
    pass


class TrainingDivergedError(ModelError):
    pass
