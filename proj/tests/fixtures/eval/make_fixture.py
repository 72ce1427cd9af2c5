#!/usr/bin/env python3
"""Generates the 10-image, 3-class detection fixture and its expected metrics.

The expected values are computed here with a straightforward re-statement of
the matching protocol (greedy by descending confidence, stable on ties; each
detection takes the unmatched same-image same-class ground truth of highest
IoU, counted when IoU >= 0.5) and all-points AP. Rerun to regenerate:

    python3 make_fixture.py
"""
import json
import os
import random

HERE = os.path.dirname(os.path.abspath(__file__))
rng = random.Random(20231017)


def clip_box(cx, cy, w, h):
    w = min(max(w, 0.02), 0.9)
    h = min(max(h, 0.02), 0.9)
    cx = min(max(cx, 0.0), 1.0)
    cy = min(max(cy, 0.0), 1.0)
    return round(cx, 4), round(cy, 4), round(w, 4), round(h, 4)


def make():
    labels, preds = {}, {}
    for i in range(10):
        img = f"img_{i:02d}"
        gts, dets = [], []
        n_gt = 0 if i == 7 else rng.randint(1, 4)
        for _ in range(n_gt):
            cls = rng.randrange(3)
            box = clip_box(rng.uniform(0.15, 0.85), rng.uniform(0.15, 0.85), rng.uniform(0.05, 0.3),
                           rng.uniform(0.05, 0.3))
            gts.append((cls, box))
            if rng.random() < 0.8:
                jitter = 0.25 if rng.random() < 0.2 else 0.05
                cx, cy, w, h = box
                det = clip_box(cx + rng.uniform(-jitter, jitter) * w, cy + rng.uniform(-jitter, jitter) * h,
                               w * rng.uniform(0.85, 1.15), h * rng.uniform(0.85, 1.15))
                dets.append((cls, det, round(rng.uniform(0.3, 0.99), 2)))
                if rng.random() < 0.25:
                    dets.append((cls, det, round(rng.uniform(0.1, 0.9), 2)))
            if rng.random() < 0.15:
                dets.append(((cls + 1) % 3, box, round(rng.uniform(0.2, 0.8), 2)))
        for _ in range(rng.randint(0, 2)):
            box = clip_box(rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.05, 0.2),
                           rng.uniform(0.05, 0.2))
            dets.append((rng.randrange(3), box, round(rng.uniform(0.05, 0.7), 2)))
        labels[img] = gts
        preds[img] = dets
    # A class that only ever appears in predictions: FPs, no AP term.
    preds["img_03"].append((5, (0.5, 0.5, 0.1, 0.1), 0.42))
    return labels, preds


def write(labels, preds):
    for sub, table, with_conf in (("labels", labels, False), ("preds", preds, True)):
        d = os.path.join(HERE, sub)
        os.makedirs(d, exist_ok=True)
        for img, rows in table.items():
            with open(os.path.join(d, img + ".txt"), "w") as f:
                for row in rows:
                    cls, (cx, cy, w, h) = row[0], row[1]
                    line = f"{cls} {cx} {cy} {w} {h}"
                    if with_conf:
                        line += f" {row[2]}"
                    f.write(line + "\n")


def load(sub, n):
    out = []
    d = os.path.join(HERE, sub)
    for name in sorted(os.listdir(d)):
        if not name.endswith(".txt"):
            continue
        with open(os.path.join(d, name)) as f:
            for line in f:
                parts = line.split()
                if not parts:
                    continue
                assert len(parts) == n
                rec = {"image": name[:-4], "cls": int(parts[0]), "box": [float(p) for p in parts[1:5]]}
                if n == 6:
                    rec["conf"] = float(parts[5])
                out.append(rec)
    return out


def iou(a, b):
    ax1, ax2 = a[0] - a[2] / 2, a[0] + a[2] / 2
    ay1, ay2 = a[1] - a[3] / 2, a[1] + a[3] / 2
    bx1, bx2 = b[0] - b[2] / 2, b[0] + b[2] / 2
    by1, by2 = b[1] - b[3] / 2, b[1] + b[3] / 2
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a[2] * a[3] + b[2] * b[3] - inter)


def evaluate(gts, dets, thresh=0.5):
    order = sorted(range(len(dets)), key=lambda i: -dets[i]["conf"])  # sorted() is stable
    used = [False] * len(gts)
    flags = []
    for i in order:
        d = dets[i]
        best, best_j = -1.0, -1
        for j, g in enumerate(gts):
            if used[j] or g["image"] != d["image"] or g["cls"] != d["cls"]:
                continue
            v = iou(d["box"], g["box"])
            if v > best:
                best, best_j = v, j
        tp = best_j >= 0 and best >= thresh
        if tp:
            used[best_j] = True
        flags.append((d["cls"], tp))
    classes = sorted({g["cls"] for g in gts})
    per_class = {}
    for c in classes:
        n_gt = sum(1 for g in gts if g["cls"] == c)
        seq = [tp for cls, tp in flags if cls == c]
        rec, prec, tp_c, fp_c = [], [], 0, 0
        for t in seq:
            tp_c += t
            fp_c += not t
            rec.append(tp_c / n_gt)
            prec.append(tp_c / (tp_c + fp_c))
        ap, prev = 0.0, 0.0
        for k in range(len(rec)):
            ap += (rec[k] - prev) * max(prec[k:])
            prev = rec[k]
        per_class[c] = ap
    return per_class, sum(per_class.values()) / len(per_class)


if __name__ == "__main__":
    labels, preds = make()
    write(labels, preds)
    per_class, m = evaluate(load("labels", 5), load("preds", 6))
    with open(os.path.join(HERE, "expected.json"), "w") as f:
        json.dump({"per_class_ap": {str(k): v for k, v in per_class.items()}, "mAP": m}, f, indent=2)
        f.write("\n")
    print(json.dumps({"per_class_ap": per_class, "mAP": m}, indent=2))
