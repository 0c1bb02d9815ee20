#!/usr/bin/env python3
"""Writes seven_node.json and its reference solution seven_node_expected.json.

The reference objective comes from one dense solve of the unscaled extensive
form with numpy, independent of the C++ assembly.
"""
import json

import numpy as np

rng = np.random.default_rng(2024)
nx, nu = 2, 1
parents = [-1, 0, 0, 1, 1, 2, 2]
stages = [0, 1, 1, 2, 2, 2, 2]
cond = [1.0, 0.35, 0.65, 0.2, 0.8, 0.5, 0.5]
probs = []
for i, p in enumerate(parents):
    probs.append(1.0 if p < 0 else probs[p] * cond[i])


def rnd(*shape):
    return np.round(rng.uniform(-1.0, 1.0, size=shape), 6)


nodes = []
for _ in parents:
    C = rnd(nx, nx)
    nodes.append({
        "A": rnd(nx, nx), "B": rnd(nx, nu),
        "Q": np.round(C @ C.T + 0.1 * np.eye(nx), 6),
        "R": np.round(np.array([[1.0 + abs(rnd(1)[0])]]), 6),
        "d": rnd(nx), "q": rnd(nx), "r": rnd(nu),
    })
x_prev, u_prev = rnd(nx), rnd(nu)

n = len(parents)
nw = nx + nu
nv, nc = n * nw, n * nx
K = np.zeros((nv + nc, nv + nc))
rhs = np.zeros(nv + nc)
for i, d in enumerate(nodes):
    pi = probs[i]
    K[i * nw:i * nw + nx, i * nw:i * nw + nx] = pi * d["Q"]
    K[i * nw + nx:(i + 1) * nw, i * nw + nx:(i + 1) * nw] = pi * d["R"]
    rhs[i * nw:i * nw + nx] = pi * d["q"]
    rhs[i * nw + nx:(i + 1) * nw] = pi * d["r"]
    row = nv + i * nx
    K[row:row + nx, i * nw:i * nw + nx] = np.eye(nx)
    rhs[row:row + nx] = d["d"]
    if parents[i] < 0:
        rhs[row:row + nx] += d["A"] @ x_prev + d["B"] @ u_prev
    else:
        a = parents[i]
        K[row:row + nx, a * nw:a * nw + nx] = -d["A"]
        K[row:row + nx, a * nw + nx:(a + 1) * nw] = -d["B"]
K[:nv, nv:] = K[nv:, :nv].T
sol = np.linalg.solve(K, rhs)
objective = 0.0
for i, d in enumerate(nodes):
    x, u = sol[i * nw:i * nw + nx], sol[i * nw + nx:(i + 1) * nw]
    objective += probs[i] * (0.5 * x @ d["Q"] @ x + 0.5 * u @ d["R"] @ u - d["q"] @ x - d["r"] @ u)


def lists(d):
    return {k: v.tolist() for k, v in d.items()}


problem = {
    "dims": {"nx": nx, "nu": nu},
    "horizon": 2,
    "explicit": {"parents": parents, "stages": stages, "probs": probs,
                 "nodes": [lists(d) for d in nodes]},
    "initial": {"x_prev": x_prev.tolist(), "u_prev": u_prev.tolist()},
}
with open("seven_node.json", "w") as f:
    json.dump(problem, f, indent=1)
    f.write("\n")
with open("seven_node_expected.json", "w") as f:
    json.dump({"objective": float(objective),
               "u_root": sol[nx:nw].tolist()}, f, indent=1)
    f.write("\n")
