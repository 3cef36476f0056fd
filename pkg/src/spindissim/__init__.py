"""Real-time dynamics of 2D spin-1/2 antiferromagnets driven by pair measurements.

Modules
-------
lattice
    Periodic square lattices, checkerboard measurement schedule, momenta.
channel
    Exact pair projectors, the outcome-summed channel and its classical kernel.
oracle
    Dense quantum evolution for at most ten spins.
thermal
    Stochastic series expansion sampler for the initial thermal ensemble.
engine
    Classical real-time engine (discrete rounds and Poisson events).
analysis
    Observables, jackknife errors and fits.
pipelines
    Relaxation rates per momentum shell and the order parameter against time.
runner, config, cli
    Replica ensembles, run configuration and the ``spindissim`` command.
"""

__version__ = "0.1.0"

from .kernels import IMPLEMENTATION as KERNEL_IMPLEMENTATION  # noqa: E402
