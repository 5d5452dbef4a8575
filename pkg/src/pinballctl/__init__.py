"""Force control on the fluidic pinball.

Desk-scale toolkit: a 2-D incompressible Navier-Stokes solver with
kernel-blended immersed rotating cylinders, the three-cylinder pinball
environment, a TD3 agent trained on force feedback, a brute-force rotation
sweep harness, and a decision-tree surrogate for trained policies.
"""

__version__ = "0.1.0"
