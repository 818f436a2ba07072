"""relchern: exterior calculus, relative cochain complexes, renormalized traces
and Fredholm index oracles on desk-scale model manifolds."""

__version__ = "0.1.0"
