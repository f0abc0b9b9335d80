import os

# single-threaded BLAS before numpy is imported anywhere: the determinism
# contracts (bit-identical regeneration and training logs) assume it
for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS",
             "NUMEXPR_NUM_THREADS", "VECLIB_MAXIMUM_THREADS"):
    os.environ.setdefault(_var, "1")
