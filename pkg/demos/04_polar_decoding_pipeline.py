"""Polar coding and the syndrome-based decoding pipeline: encode, corrupt,
pre-process into [|s|, syndrome], and post-process with multiplicative noise.

Run from the repo root:  python3 demos/04_polar_decoding_pipeline.py
"""

import numpy as np

from phyfm.phytasks import (ber, ecct_postprocess, extract_info_bits,
                            make_decoding_sample, make_polar_code,
                            noise_prob_to_sign, polar_encode,
                            polar_parity_check)

code = make_polar_code(64, 32)
print(f"(64,32) polar code; frozen set (first 10): {code.frozen[:10]} ...")

rng = np.random.default_rng(1)
bits = rng.integers(0, 2, 32).astype(np.uint8)
codeword = polar_encode(bits, code)
p = polar_parity_check(code)
print(f"codeword weight {codeword.sum()}, syndrome (should be 0): "
      f"{((p @ codeword) % 2).sum()} nonzeros")

for ebn0 in (4.0, 5.0, 6.0):
    sample = make_decoding_sample(bits, code, ebn0, seed=7)
    flips = int(sample.z_tilde.sum())
    print(f"Eb/N0 {ebn0:.0f} dB: {flips} sign flips; "
          f"pre-processed vector length {sample.s_tilde.shape[0]} (= 2n-m)")

# the network's job is to predict the binary multiplicative noise z;
# with oracle probabilities the post-processor recovers the message exactly
sample = make_decoding_sample(bits, code, 4.0, seed=7)
oracle_p = sample.z_tilde.astype(float)
decoded = ecct_postprocess(sample.s_hat, noise_prob_to_sign(oracle_p))
print(f"\noracle-noise decode: codeword BER {ber(decoded, sample.codeword):.3f}, "
      f"info bits match: {np.array_equal(extract_info_bits(decoded, code), bits)}")

# identity noise (all +1) is just the hard decision
hard = ecct_postprocess(sample.s_hat, np.ones(64))
print(f"hard-decision BER at 4 dB: {ber(hard, sample.codeword):.3f}")
