"""Shared numeric conventions and error types."""

# Below this Euclidean norm a weight group is treated as exactly zero when
# counting active groups and when mapping dual weights back to filters.
GROUP_ZERO_TOL = 1e-8

# Singular values below RANK_RTOL * sigma_max do not count toward matrix rank.
RANK_RTOL = 1e-10


class DualDenoiseError(Exception):
    """Base class for errors raised by this package."""


class DivergenceError(DualDenoiseError):
    """An iterative solver exceeded 10x its initial objective value."""

    def __init__(self, iteration, objective, initial):
        self.iteration = iteration
        self.objective = objective
        self.initial = initial
        super().__init__(
            f"objective {objective:.6g} at iteration {iteration} exceeds "
            f"10x initial value {initial:.6g}"
        )


class FormatError(DualDenoiseError):
    """A binary file did not match its declared format."""
