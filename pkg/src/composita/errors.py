"""Exception types shared across the package."""


class ContractError(RuntimeError):
    """A numerical contract could not be met (as opposed to bad user input)."""


class UniformityError(ContractError):
    """A generated point configuration failed the quasi-uniformity check."""


class NodeBudgetError(ContractError):
    """A quadrature rule would exceed the configured node limit."""


class SpectralDomainError(ValueError):
    """Input lies outside the domain of a spectral operator."""


class RankDeficiencyError(ContractError):
    """An unregularized least-squares system is rank deficient."""


class DegenerateStudyError(ContractError):
    """A rate study produced errors too small or invalid for a slope fit."""
