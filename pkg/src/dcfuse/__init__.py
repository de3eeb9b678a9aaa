"""Multi-focus image fusion for extended depth-of-field microscopy.

Submodules: imagio (grayscale PNG + dataset manifests), datasynth
(synthetic defocus pairs), fusenet (fusion network and rules), focusdet
(focus-property detector), losses (training objective), trainer
(optimization and checkpoints), metrics (quality metrics and ranking),
cli (command-line entry point).
"""

__version__ = "0.1.0"

from . import imagio, datasynth, fusenet, focusdet, losses, trainer, metrics

__all__ = ["imagio", "datasynth", "fusenet", "focusdet", "losses",
           "trainer", "metrics", "__version__"]
