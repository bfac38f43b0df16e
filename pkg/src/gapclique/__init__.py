"""Toolkit for the randomized reduction from k-vector-sum to gap clique.

Modules
-------
ffield      exact prime-field scalars, vectors, block vectors, matrices
lintest     linearity testing, Fourier analysis, list decoding, piecing
vecsum      vector-sum instances: generation, brute-force deciding, sumsets
randmap     the random block-linear map and its two goodness properties
reduction   parameter schedule, vertex set, edge oracle, decoder, export
cliquesolve exact and greedy clique search used as the ground-truth oracle
cli         command-line pipeline and the experiment harness
"""

__version__ = "0.1.0"
