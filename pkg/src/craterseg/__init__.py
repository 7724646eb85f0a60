"""Crater detection on synthetic planetary surfaces.

End-to-end pipeline: geometry-aware tile extraction (:mod:`craterseg.geo`),
crater catalogues and rim masks (:mod:`craterseg.catalog`), a deterministic
synthetic tile generator for two bodies (:mod:`craterseg.synth`), a compact
trainable U-Net with fine-tuning (:mod:`craterseg.net`), and the
post-processing/evaluation stack (:mod:`craterseg.post`). The
:mod:`craterseg.cli` module wires it all into an experiment harness.
"""

__version__ = "0.1.0"
