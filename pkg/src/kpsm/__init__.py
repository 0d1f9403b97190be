"""Graph expansions for the globalized Poisson sigma model: star products,
formality data, formal geometry, boundary operators and graph weights."""

__version__ = "0.1.0"
