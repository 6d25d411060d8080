"""Walkthrough: what the conditional contrastive loss rewards.

Four samples sit on the unit circle in two label groups. Sliding the groups
together or apart shows the push/pull behavior: tight same-label clusters and
well-separated groups give a small loss; mixing the groups blows it up. The
temperature sets how sharply the loss reacts.
"""

import math

import torch

from attributegan.contrastive import conditional_contrastive_loss


def circle(angles):
    a = torch.tensor(angles, dtype=torch.float64)
    return torch.stack([torch.cos(a), torch.sin(a)], dim=1)


ids = torch.tensor([0, 0, 1, 1])

print("=== intra-group spread (groups at opposite poles) ===")
for spread in (0.05, 0.2, 0.5, 1.0):
    emb = circle([-spread, spread, math.pi - spread, math.pi + spread])
    labels = circle([0.0, 0.0, math.pi, math.pi])
    loss = conditional_contrastive_loss(emb, ids, labels, 0.5).item()
    print(f"spread {spread:4.2f} rad -> loss {loss:.4f}")

print()
print("=== group separation (tight clusters, moving poles) ===")
for gap in (math.pi, math.pi / 2, math.pi / 4, math.pi / 8):
    emb = circle([-0.05, 0.05, gap - 0.05, gap + 0.05])
    labels = circle([0.0, 0.0, gap, gap])
    loss = conditional_contrastive_loss(emb, ids, labels, 0.5).item()
    print(f"separation {gap:5.3f} rad -> loss {loss:.4f}")

print()
print("=== temperature ===")
emb = circle([-0.2, 0.2, math.pi - 0.2, math.pi + 0.2])
labels = circle([0.0, 0.0, math.pi, math.pi])
for t in (0.1, 0.5, 1.0, 10.0, 1e6):
    loss = conditional_contrastive_loss(emb, ids, labels, t).item()
    print(f"t = {t:>9.1f} -> loss {loss:.4f}")
print()
print("as t -> inf every exponential flattens to 1 and the loss settles at")
n, m = 4, 1
print(f"-log((1+m)/n) = {-math.log((1 + m) / n):.4f} for m=1 same-label partner in a batch of {n}")
