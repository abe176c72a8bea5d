"""palmspin: a desk-scale in-hand object rotation testbed.

Two-stage pipeline on a simplified rigid-body hand simulator: a privileged
oracle policy trained with PPO, then distilled into a visuotactile
transformer that sees only proprioception, discretized touch, and foreground
depth.
"""

__version__ = "0.1.0"
