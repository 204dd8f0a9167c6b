# Triplet hashing test suites
