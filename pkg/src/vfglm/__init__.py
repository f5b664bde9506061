"""Vertical federated GLM training over secret shares and Paillier ciphertexts.

Parties hold disjoint feature columns of the same samples; one party holds the
labels. Training runs gradient descent where each iteration combines additive
secret sharing (with Beaver triples) between two computing parties and
additively homomorphic encryption for the gradient exchange, so no plaintext
features, labels, weights, or gradients ever leave their owner.
"""

from vfglm.fixedpoint import FieldParams

__all__ = ["FieldParams"]
__version__ = "0.1.0"
