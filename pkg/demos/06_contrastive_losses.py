"""Domain-prompter objectives: values, gradients, and a finite-difference spot check.

Run: python3 demos/06_contrastive_losses.py
"""
import numpy as np

from protodet import DomainBank, loss_domain, loss_proto, loss_total_dp, perturb

rng = np.random.default_rng(3)

# Two orthogonal unit domains are already "diverse": the loss is nearly zero.
tight = DomainBank(np.array([[1.0, 0.0], [0.0, 1.0]]))
v_orth, _ = loss_domain(tight, tau_domain=0.1)
print("domain diversity loss, orthogonal pair:", v_orth, "(= ln(1+e^-10))")

clones = DomainBank(np.array([[1.0, 0.0], [1.0, 0.0]]))
v_same, _ = loss_domain(clones, tau_domain=0.1)
print("identical pair:", round(v_same, 6), "(= ln 2: positives indistinguishable)")

# Prototype consistency: perturbed copies of a prototype should stay close.
protos = rng.normal(size=(4, 8))
bank = DomainBank(0.3 * rng.normal(size=(8, 8)))  # n_dom = 2 * n_classes
value, g_protos, g_bank = loss_proto(protos, bank, pair=(0, 5), tau_proto=2.0)
print("\nprototype consistency loss:", round(value, 4))
print("gradient norms: prototypes", round(float(np.linalg.norm(g_protos)), 5),
      "| bank", round(float(np.linalg.norm(g_bank)), 5))

# Spot-check one coordinate against central differences.
h = 1e-5
probe = protos.copy()
probe[1, 3] += h
up, _, _ = loss_proto(probe, bank, (0, 5), 2.0)
probe[1, 3] -= 2 * h
down, _, _ = loss_proto(probe, bank, (0, 5), 2.0)
fd = (up - down) / (2 * h)
print("analytic vs finite-difference at protos[1,3]:",
      round(float(g_protos[1, 3]), 8), "vs", round(float(fd), 8))

print("\nperturbed prototype = prototype + domain:",
      np.round(perturb(protos[0, :3], bank.domains[0, :3]), 3))
print("total objective L_dp:", round(loss_total_dp(v_orth, value), 4))
