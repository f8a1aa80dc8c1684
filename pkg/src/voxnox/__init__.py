"""Open-ended evolution of 3D voxel buildings.

CPPN genomes evolved by NEAT under constrained novelty search in the latent
space of a 3D convolutional autoencoder, with periodic retraining of that
autoencoder on previously-discovered novel individuals.
"""

__version__ = "0.1.0"
