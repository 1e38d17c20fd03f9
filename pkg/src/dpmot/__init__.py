"""Semi-discrete optimal transport jump followed by a short reverse diffusion.

Submodules: ``brenier`` (potential), ``sdot`` (solver), ``diffusion``,
``scores``, ``sampler``, ``metrics``, ``oracle`` and the ``pipeline``/``cli``
harness.
"""
__version__ = "0.1.0"
