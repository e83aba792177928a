"""Independent brute-force reference implementations for the metric suite.

Deliberately written against raw sqlite3 and plain Python, sharing no code
with the package: these are the oracles the metric implementations are
checked against. Rules implemented directly from the metric definitions:
order-insensitive set comparison for EX (strict variant keeps order), the
row-pairing cell-overlap procedure for Soft F1, and the timing-ratio reward
for R-VES.
"""

from __future__ import annotations

import sqlite3
import time
from collections import Counter


class OracleTimeout(Exception):
    pass


def run_sql(db_path, sql, timeout=30.0):
    """Plain sqlite3 execution; returns rows or raises (any failure)."""
    conn = sqlite3.connect(f"file:{db_path}?mode=ro", uri=True)
    expires = time.monotonic() + timeout

    def guard():
        return 1 if time.monotonic() > expires else 0

    conn.set_progress_handler(guard, 500)
    try:
        try:
            rows = conn.execute(sql).fetchall()
        except sqlite3.Error as exc:
            if time.monotonic() > expires:
                raise OracleTimeout(str(exc)) from exc
            raise
        return rows
    finally:
        conn.close()


def norm_cell(value):
    if value is None:
        return ("null",)
    if isinstance(value, float):
        rounded = round(value, 6)
        if rounded == int(rounded):
            return ("num", int(rounded))
        return ("num", rounded)
    if isinstance(value, int):
        return ("num", value)
    if isinstance(value, (bytes, memoryview)):
        return ("blob", bytes(value))
    return ("text", value)


def norm_rows(rows):
    return [tuple(norm_cell(v) for v in row) for row in rows]


def oracle_ex(pred_rows, gold_rows, mode="row_set"):
    pred, gold = norm_rows(pred_rows), norm_rows(gold_rows)
    if mode == "strict":
        return int(pred == gold)
    return int(sorted(pred) == sorted(gold))


def oracle_soft_f1(pred_rows, gold_rows):
    """Row pairing by maximum cell-multiset overlap, each gold row used once."""
    pred = [Counter(row) for row in norm_rows(pred_rows)]
    gold = [Counter(row) for row in norm_rows(gold_rows)]
    pred_width = len(pred_rows[0]) if pred_rows else 0
    gold_width = len(gold_rows[0]) if gold_rows else 0
    pairs = []
    for pi, prow in enumerate(pred):
        for gi, grow in enumerate(gold):
            overlap = sum((prow & grow).values())
            if overlap > 0:
                pairs.append((overlap, pi, gi))
    pairs.sort(key=lambda t: (-t[0], t[1], t[2]))
    used_p, used_g = set(), set()
    tp = fp = fn = 0
    for overlap, pi, gi in pairs:
        if pi in used_p or gi in used_g:
            continue
        used_p.add(pi)
        used_g.add(gi)
        tp += overlap
        fp += pred_width - overlap
        fn += gold_width - overlap
    fp += pred_width * (len(pred) - len(used_p))
    fn += gold_width * (len(gold) - len(used_g))
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return precision, recall, f1


def _tier_table(per_item):
    out = {}
    for tier in ("simple", "moderate", "challenging"):
        scores = [s for d, s in per_item if d == tier]
        out[tier] = round(100.0 * sum(scores) / len(scores), 2) if scores else 0.0
    everything = [s for _d, s in per_item]
    out["total"] = round(100.0 * sum(everything) / len(everything), 2) if everything else 0.0
    return out


def oracle_eval(items, db_root, mode="row_set", timeout=30.0):
    """EX and Soft F1 tier tables for (task_id, difficulty, pred, gold, db_id) items."""
    ex_scores, f1_scores = [], []
    for item in items:
        db = f"{db_root}/{item.database_id}/{item.database_id}.sqlite"
        gold_rows = run_sql(db, item.gold_sql, timeout)
        try:
            pred_rows = run_sql(db, item.pred_sql, timeout)
        except (sqlite3.Error, OracleTimeout):
            ex_scores.append((item.difficulty, 0.0))
            f1_scores.append((item.difficulty, 0.0))
            continue
        ex_scores.append((item.difficulty, float(oracle_ex(pred_rows, gold_rows, mode))))
        f1_scores.append((item.difficulty, oracle_soft_f1(pred_rows, gold_rows)[2]))
    return _tier_table(ex_scores), _tier_table(f1_scores)


def _time_once(db_path, sql, timeout):
    start = time.perf_counter()
    run_sql(db_path, sql, timeout)
    return time.perf_counter() - start


def oracle_rves(items, db_root, mode="row_set", repeats=3, outer=3, timeout=30.0):
    """Timing-ratio reward over EX-passing items; best of ``outer`` runs."""
    passing = []
    for item in items:
        db = f"{db_root}/{item.database_id}/{item.database_id}.sqlite"
        gold_rows = run_sql(db, item.gold_sql, timeout)
        try:
            pred_rows = run_sql(db, item.pred_sql, timeout)
        except (sqlite3.Error, OracleTimeout):
            continue
        if oracle_ex(pred_rows, gold_rows, mode):
            passing.append((item, db))
    best = None
    for _ in range(outer):
        rewards = []
        for item, db in passing:
            try:
                t_pred = min(_time_once(db, item.pred_sql, timeout) for _ in range(repeats))
                t_gold = min(_time_once(db, item.gold_sql, timeout) for _ in range(repeats))
            except OracleTimeout:
                continue
            t_pred, t_gold = max(t_pred, 1e-9), max(t_gold, 1e-9)
            reward = 1.0 if t_pred < t_gold else 2.0 / (1.0 + t_pred / t_gold)
            rewards.append((item.difficulty, reward))
        table = _tier_table(rewards)
        if best is None or table["total"] > best["total"]:
            best = table
    return best


def oracle_grpo_surrogate(ratios, advantages, epsilon):
    terms = []
    for r, a in zip(ratios, advantages):
        if r < 1 - epsilon:
            clipped = 1 - epsilon
        elif r > 1 + epsilon:
            clipped = 1 + epsilon
        else:
            clipped = r
        unclipped_term = r * a
        clipped_term = clipped * a
        terms.append(unclipped_term if unclipped_term < clipped_term else clipped_term)
    return sum(terms) / len(terms)


def oracle_grpo_objective(ratios, advantages, epsilon, beta, kl):
    return oracle_grpo_surrogate(ratios, advantages, epsilon) - beta * kl
