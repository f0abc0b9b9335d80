"""Environment-aware multi-task physical-layer toolkit.

Submodules: scene (room generation/rasterization), propagation (image-source
ray tracing), channel (multipath assembly, noise), phytasks (five-task sample
synthesis and metrics), baselines (LS/ZF/LMMSE/WMMSE), adcore (reverse-mode
autodiff), model (prompt-guided multi-task transformer), training
(multi-task fit/eval), datastore (dataset container), cli (command line).
"""

__version__ = "0.1.0"
