"""
Mixture Logic Module
Gaussian mixtures, EM, the noise channel and the emulated quantum subroutines
"""
