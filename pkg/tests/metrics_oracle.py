"""Brute-force counting oracle for binary metrics, written without the package."""


def brute_force(y_true, y_pred, positive):
    tp = tn = fp = fn = 0
    for t, p in zip(y_true, y_pred):
        if t == positive and p == positive:
            tp += 1
        elif t != positive and p != positive:
            tn += 1
        elif t != positive:
            fp += 1
        else:
            fn += 1
    prec = tp / (tp + fp) if tp + fp > 0 else 0.0
    rec = tp / (tp + fn) if tp + fn > 0 else 0.0
    f1 = 2 * prec * rec / (prec + rec) if prec + rec > 0 else 0.0
    acc = (tp + tn) / len(y_true)
    return (tp, tn, fp, fn), (acc, prec, rec, f1)


# (method, fake P, R, F1, real P, R, F1) from the published MMIFND comparison table
PUBLISHED = [
    ("SpotFake", 0.957, 0.989, 0.973, 0.989, 0.956, 0.972),
    ("Semi-FND", 0.979, 0.976, 0.977, 0.977, 0.979, 0.978),
    ("Mul-FaD", 0.967, 0.927, 0.947, 0.942, 0.977, 0.959),
    ("HFND-TE", 0.993, 0.927, 0.959, 0.933, 0.993, 0.962),
    ("FND-CLIP", 0.992, 0.983, 0.987, 0.984, 0.992, 0.988),
    ("MMCFND", 0.998, 0.994, 0.996, 0.995, 0.998, 0.997),
]
