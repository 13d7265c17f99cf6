"""Desk-scale distributed training scaling lab.

Ring-allreduce data-parallel training of a small 3D-convolution model,
scaling-efficiency / percent-of-peak reporting, and HPC container launch
recipe generation.
"""

__version__ = "0.1.0"
