"""Energy-efficiency toolkit for an amplifying dual-sided surface aided SWIPT downlink.

Subpackages by concern:

* :mod:`starswipt.model` -- pure physical-layer evaluation (channels in, metrics out)
* :mod:`starswipt.channels` -- seeded channel realization from geometry
* :mod:`starswipt.convex` -- transmit beamforming / power-split stage (lifted SDP,
  concave-minus-affine surrogate, ratio-maximization outer loop)
* :mod:`starswipt.env` -- episodic environment over the surface configuration
* :mod:`starswipt.nets`, :mod:`starswipt.agents` -- hybrid discrete/continuous
  actor-critic learner
* :mod:`starswipt.meta` -- task-distribution meta-training and fast adaptation
* :mod:`starswipt.config`, :mod:`starswipt.bench`, :mod:`starswipt.cli` --
  experiment configuration, schemes/baselines, sweeps, export and plots
"""

__version__ = "0.1.0"
