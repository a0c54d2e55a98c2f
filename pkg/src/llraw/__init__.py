"""Low-light RAW synthesis and noise-robust network kernels.

Subpackages by concern:

* ``tensor``  — conv/pool/linear primitives, gradient checker, SGD
* ``tnsr``    — the TNSR v1 binary tensor format
* ``isp``     — invertible camera pipeline (unprocess/process, Bayer, quantize)
* ``noise``   — physics-based sensor noise injection, fully seeded
* ``awd``     — adaptive weighted downsampling and fixed baselines
* ``scb``     — smooth-oriented convolutional block with exact fold
* ``dsl``     — disturbance metric, composite loss, toy trainer
* ``shapes``  — procedural paired dataset for the toy task
* ``cli``     — the ``llraw`` command-line front end

Numerics run on the compiled kernel extension when it is built, falling
back to vectorized numpy otherwise; see ``llraw.backend``.
"""

from llraw.backend import backend_name

__version__ = "0.1.0"

__all__ = ["backend_name", "__version__"]
