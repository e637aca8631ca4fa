"""Non-stationary Poisson-gamma dynamical systems: simulation, Gibbs
sampling and evaluation for count-valued time sequences."""

__version__ = '0.1.0'
