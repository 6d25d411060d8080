"""Walkthrough: linear-complexity attention equals the quadratic form.

The attention output ((Q K^T)/n) V can be regrouped by associativity as
(Q/sqrt(n)) ((K^T/sqrt(n)) V). The left form materializes an n-by-n
position-similarity matrix; the right form only ever builds a (d_k, d_v)
context matrix. This script shows the two paths agree to float64 precision,
that the linear path really never allocates an n-by-n intermediate, and how
the runtime scales as n grows.
"""

import time

import torch

from attributegan.attention import (
    AttentionProjections,
    attention_linear,
    attention_quadratic,
    max_square_dim,
    record_op_shapes,
)


def projections(n, d, seed=0):
    g = torch.Generator().manual_seed(seed)
    return AttentionProjections(
        torch.randn(1, n, d, generator=g, dtype=torch.float64),
        torch.randn(1, n, d, generator=g, dtype=torch.float64),
        torch.randn(1, n, d, generator=g, dtype=torch.float64),
        n,
    )


print("=== agreement across sizes ===")
for n in (1, 16, 256, 1024):
    p = projections(n, 16)
    diff = (attention_linear(p) - attention_quadratic(p)).abs().max().item()
    print(f"n={n:5d}  max |linear - quadratic| = {diff:.2e}")

print()
print("=== memory shapes ===")
p = projections(4096, 16)
with record_op_shapes() as shapes:
    attention_linear(p)
print(f"linear path, n=4096: largest square intermediate = {max_square_dim(shapes)}")
with record_op_shapes() as shapes:
    attention_quadratic(p)
print(f"quadratic path, n=4096: largest square intermediate = {max_square_dim(shapes)}")

print()
print("=== runtime scaling (float32, batch 4, d=32) ===")
for n in (256, 1024, 4096):
    g = torch.Generator().manual_seed(1)
    p = AttentionProjections(
        torch.randn(4, n, 32, generator=g),
        torch.randn(4, n, 32, generator=g),
        torch.randn(4, n, 32, generator=g),
        n,
    )
    t0 = time.perf_counter()
    for _ in range(5):
        attention_linear(p)
    linear_ms = (time.perf_counter() - t0) / 5 * 1000
    t0 = time.perf_counter()
    for _ in range(5):
        attention_quadratic(p)
    quad_ms = (time.perf_counter() - t0) / 5 * 1000
    print(f"n={n:5d}  linear {linear_ms:7.2f} ms   quadratic {quad_ms:7.2f} ms")
