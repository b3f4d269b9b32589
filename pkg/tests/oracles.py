"""Independent brute-force reimplementations used as test oracles.

Everything here is deliberately written as straight-line numpy / python
loops against raw parameter arrays, sharing no code with the engine's
graph-based forward passes.
"""

import math

import numpy as np


def softmax_oracle(logits, temperature=1.0):
    m = max(logits)
    exps = [math.exp((float(v) - m) / temperature) for v in logits]
    total = sum(exps)
    return np.array([e / total for e in exps])


def cosine_oracle(a, b):
    na = math.sqrt(sum(float(x) * float(x) for x in a))
    nb = math.sqrt(sum(float(x) * float(x) for x in b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return sum(float(x) * float(y) for x, y in zip(a, b)) / (na * nb)


def kl_oracle(p, q, floor=1e-12):
    total = 0.0
    for pi, qi in zip(p, q):
        if pi > 0.0:
            total += pi * (math.log(pi) - math.log(max(qi, floor)))
    return total


def ce_oracle(probs, label, floor=1e-12):
    return -math.log(max(float(probs[label]), floor))


def visual_oracle(params, x):
    """Forward the 2-hidden-layer tanh MLP for one raw vector."""
    h = np.tanh(x @ params["visual.fc1.weight"] + params["visual.fc1.bias"])
    h = np.tanh(h @ params["visual.fc2.weight"] + params["visual.fc2.bias"])
    return h @ params["visual.fc3.weight"] + params["visual.fc3.bias"]


def text_feature_oracle(params, token_id, prompt_len):
    """Dataset/fixed-prompt text feature -> adapted z for one class
    (bottleneck adaptor, the default)."""
    table = params["semantic.token_table"]
    rows = [params["prompt.context"][i] for i in range(prompt_len)]
    rows.append(table[token_id])
    pooled = np.zeros_like(rows[0])
    for r in rows:
        pooled = pooled + r
    pooled = pooled / len(rows)
    text = np.tanh(pooled @ params["semantic.mixer.weight"] + params["semantic.mixer.bias"])
    hidden = np.tanh(text @ params["adaptor.fc1.weight"] + params["adaptor.fc1.bias"])
    return hidden @ params["adaptor.fc2.weight"] + params["adaptor.fc2.bias"]


def prototypes_oracle(params, episode, prompt_len):
    """(fused, visual) prototype lists via per-class loops (add fusion)."""
    fused, visual = [], []
    for i in range(episode.n_way):
        feats = [visual_oracle(params, episode.support_x[i, j]) for j in range(episode.k_shot)]
        z = text_feature_oracle(params, int(episode.token_ids[i]), prompt_len)
        p0 = sum(feats) / episode.k_shot
        p = sum(f + z for f in feats) / episode.k_shot
        visual.append(p0)
        fused.append(p)
    return np.array(fused), np.array(visual)


def classify_oracle(params, query_raw, protos, temperature):
    q = visual_oracle(params, query_raw)
    sims = [cosine_oracle(q, p) for p in protos]
    return softmax_oracle(sims, temperature)


def ensemble_oracle(y_hat, y_hat0, lam):
    return np.array([a + lam * b for a, b in zip(y_hat, y_hat0)])


def meta_loss_oracle(params, episode, prompt_len, mode, tau, tau2, alpha):
    """Mean-over-queries loss for simplefsl / simplefsl_pp via loops."""
    fused, visual = prototypes_oracle(params, episode, prompt_len)
    l1_terms, l2_terms, kd_terms = [], [], []
    for q_raw, label in zip(episode.query_x, episode.query_y):
        y = classify_oracle(params, q_raw, fused, tau2)
        l1_terms.append(ce_oracle(y, int(label)))
        if mode == "simplefsl_pp":
            y0 = classify_oracle(params, q_raw, visual, tau)
            l2_terms.append(ce_oracle(y0, int(label)))
            kd_terms.append(0.5 * (kl_oracle(y, y0) + kl_oracle(y0, y)))
    l1 = sum(l1_terms) / len(l1_terms)
    if mode == "simplefsl":
        return l1
    return l1 + sum(l2_terms) / len(l2_terms) + alpha * (sum(kd_terms) / len(kd_terms))
