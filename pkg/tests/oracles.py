"""Independent reference implementations used to check the library.

Everything here is deliberately written from the definitions, not by calling
or copying library code: plain dicts and tuples in, nested loops and
index arithmetic inside. Tests compare library outputs against these.
"""

from __future__ import annotations


# ---------------------------------------------------------------------------
# shape simulation over plain layer dicts

def oracle_shapes(input_chw, layers, num_classes):
    """Returns (per-layer shapes, None) when the stack is well formed, else
    (None, index of the first offending layer)."""
    c, h, w = input_chw
    flat = False
    shapes = []
    for i, layer in enumerate(layers):
        op = layer["op"]
        if op == "conv2d":
            if flat:
                return None, i
            oh = (h + 2 * layer["padding"] - layer["kernel"]) // layer["stride"] + 1
            ow = (w + 2 * layer["padding"] - layer["kernel"]) // layer["stride"] + 1
            if oh < 1 or ow < 1:
                return None, i
            c, h, w = layer["out_channels"], oh, ow
        elif op == "pool":
            if flat:
                return None, i
            oh = (h - layer["size"]) // layer["stride"] + 1
            ow = (w - layer["size"]) // layer["stride"] + 1
            if oh < 1 or ow < 1:
                return None, i
            h, w = oh, ow
        elif op == "global_pool":
            if flat:
                return None, i
            h, w = 1, 1
        elif op == "norm":
            if layer["kind"] == "group":
                g = layer.get("groups")
                if g is None or c % g != 0:
                    return None, i
        elif op in ("act", "dropout"):
            pass
        elif op == "flatten":
            c, h, w = c * h * w, 1, 1
            flat = True
        elif op == "dense":
            if not flat:
                return None, i
            c = layer["out_features"]
        else:
            return None, i
        shapes.append((c, h, w))
    last = len(layers) - 1
    if not flat:
        return None, last
    if c != num_classes:
        return None, last
    return shapes, None


# ---------------------------------------------------------------------------
# per-layer cost tables

def oracle_params(input_chw, layers, shapes):
    total = 0
    cin = input_chw[0]
    for layer, out in zip(layers, shapes):
        op = layer["op"]
        if op == "conv2d":
            total += layer["kernel"] * layer["kernel"] * cin * layer["out_channels"]
            if layer["bias"]:
                total += layer["out_channels"]
        elif op == "dense":
            total += cin * layer["out_features"]
            if layer["bias"]:
                total += layer["out_features"]
        elif op == "norm" and layer["kind"] != "none":
            total += 2 * cin
        cin = out[0]
    return total


def oracle_flops(input_chw, layers, shapes, batch):
    total = 0
    ci, hi, wi = input_chw
    for layer, (c, h, w) in zip(layers, shapes):
        op = layer["op"]
        if op == "conv2d":
            total += 2 * layer["kernel"] * layer["kernel"] * ci * c * h * w
        elif op == "dense":
            total += 2 * ci * layer["out_features"]
        elif op in ("pool", "global_pool"):
            total += ci * hi * wi
        elif op == "norm":
            total += 4 * ci * hi * wi
        elif op == "act":
            total += ci * hi * wi
        ci, hi, wi = c, h, w
    return total * batch


def oracle_peak_memory(input_chw, layers, shapes, batch, bytes_per_scalar):
    weights = oracle_params(input_chw, layers, shapes) * bytes_per_scalar
    prev = input_chw[0] * input_chw[1] * input_chw[2]
    widest = 0
    for c, h, w in shapes:
        cur = c * h * w
        widest = max(widest, prev + cur)
        prev = cur
    return weights + batch * bytes_per_scalar * widest


# ---------------------------------------------------------------------------
# fairness equations, transcribed with nested loops

def _rates(rows, cls):
    """(tpr, fpr, tnr) for one-vs-rest of cls over (true, pred) rows, or None
    when the slice lacks positives or negatives."""
    tp = fp = tn = fn = 0
    for true, pred in rows:
        if true == cls and pred == cls:
            tp += 1
        elif true == cls:
            fn += 1
        elif pred == cls:
            fp += 1
        else:
            tn += 1
    if tp + fn == 0 or fp + tn == 0:
        return None
    return tp / (tp + fn), fp / (fp + tn), tn / (fp + tn)


def oracle_unfairness(rows, attrs):
    """rows: (true, pred, memberships) triples; attrs: (name, groups) pairs."""
    n = len(rows)
    overall = sum(1 for t, p, _ in rows if t == p) / n
    deviations = []
    for name, groups in attrs:
        for g in groups:
            member = [(t, p) for t, p, m in rows if m[name] == g]
            if member:
                acc = sum(1 for t, p in member if t == p) / len(member)
                deviations.append(abs(acc - overall))
    return sum(deviations) / len(deviations)


def oracle_pair_metric(rows, attrs, mode):
    """mode selects the per-term value: eodd max(|dTPR|,|dFPR|), eopp1 |dTPR|,
    eopp2 |dTNR|. Pair terms exist only for classes where both groups have
    positives and negatives; a pair with no terms is dropped; no pairs at all
    gives None."""
    classes = sorted({t for t, _, _ in rows})
    pair_values = []
    for name, groups in attrs:
        for i in range(len(groups)):
            for j in range(i + 1, len(groups)):
                rows1 = [(t, p) for t, p, m in rows if m[name] == groups[i]]
                rows2 = [(t, p) for t, p, m in rows if m[name] == groups[j]]
                terms = []
                for cls in classes:
                    r1 = _rates(rows1, cls)
                    r2 = _rates(rows2, cls)
                    if r1 is None or r2 is None:
                        continue
                    tpr1, fpr1, tnr1 = r1
                    tpr2, fpr2, tnr2 = r2
                    if mode == "eodd":
                        terms.append(max(abs(tpr1 - tpr2), abs(fpr1 - fpr2)))
                    elif mode == "eopp1":
                        terms.append(abs(tpr1 - tpr2))
                    elif mode == "eopp2":
                        terms.append(abs(tnr1 - tnr2))
                    else:
                        raise ValueError(mode)
                if terms:
                    pair_values.append(sum(terms) / len(terms))
    if not pair_values:
        return None
    return sum(pair_values) / len(pair_values)


# ---------------------------------------------------------------------------
# candidate selection by full sort

def oracle_best(entries, policy):
    """entries: (name, metric-lookup dict, iteration) triples. Sort the whole
    list under the policy keys plus the iteration tiebreak, take the head."""
    def sort_key(entry):
        _, values, iteration = entry
        key = []
        for field, direction in policy:
            v = values[field]
            if v is None:
                key.append((1, 0.0))
            elif direction == "asc":
                key.append((0, float(v)))
            else:
                key.append((0, -float(v)))
        key.append(iteration)
        return tuple(key)

    return sorted(entries, key=sort_key)[0]
