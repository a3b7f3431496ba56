"""Deep class-wise hashing: train an embedding net, binarise, retrieve by Hamming distance."""
