"""Seeded synthetic telecom data with a plantable churn signal.

The generator builds a community-structured friendship graph over home,
competitor and landline numbers, then emits monthly call/SMS/MMS/data
events. Churners differ from active customers in three ways:

* outgoing activity decays over the last few months before the baseline,
  starting at a customer-specific onset month;
* a larger share of their contacts sit on the competitor network, and their
  profile/usage attributes (balance, age, 2G share, dropped calls) drift;
* most of them acquire a competitor "shadow number" that starts talking to a
  subset of their friends. The churner's own records never show this line,
  so it is only visible through neighbourhood overlap in the social graph.

Active customers get matching noise (activity dips, dual-SIM competitor lines)
so that no single feature separates the classes.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from ._util import month_bounds
from .cdr_ingest import (
    CustomerId, CustomerProfile, Label, LabelRecord, Operator,
    write_cdr_frame, write_labels, write_profiles,
)

DEFAULT_BASELINE = dt.date(2021, 10, 1)


@dataclass
class SyntheticSpec:
    n_customers: int = 10_000
    months: int = 9
    churn_rate: float = 0.05
    baseline: dt.date = DEFAULT_BASELINE
    recent_activation_share: float = 0.08
    recent_activation_months: int = 4
    competitor_ratio: float = 0.35
    landline_ratio: float = 0.05
    community_size: int = 40
    friend_stubs: float = 6.0
    mean_outgoing_per_month: float = 14.0
    mean_data_sessions_per_month: float = 6.0
    internet_user_share: float = 0.65
    # churn signal knobs
    activity_decay: float = 0.55
    max_onset_months: int = 5
    competitor_boost: float = 0.12
    shadow_share: float = 0.7
    dual_sim_share: float = 0.05
    active_dip_share: float = 0.15
    profile_signal: float = 1.0

    def validate(self) -> None:
        if self.n_customers <= 0:
            raise ValueError("n_customers must be positive")
        if not 0.0 < self.churn_rate < 1.0:
            raise ValueError("churn_rate must lie in (0, 1)")
        n_churn = int(round(self.churn_rate * self.n_customers))
        if n_churn == 0 or n_churn == self.n_customers:
            raise ValueError("churn_rate yields an empty class for this customer count")
        if self.months < 1:
            raise ValueError("months must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["baseline"] = self.baseline.isoformat()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticSpec":
        d = dict(d)
        if isinstance(d.get("baseline"), str):
            d["baseline"] = dt.date.fromisoformat(d["baseline"])
        return cls(**d)


@dataclass
class SyntheticData:
    cdr: pd.DataFrame
    profiles: list[CustomerProfile]
    labels: list[LabelRecord]


def _segment_choice(rng, owners, indptr, cumw):
    """For each event owner pick one contact, weighted, from its CSR segment."""
    u = rng.random(len(owners))
    target = owners + u
    pos = np.searchsorted(cumw, target, side="right")
    lo, hi = indptr[owners], indptr[owners + 1] - 1
    return np.clip(pos, lo, hi)


def simulate(spec: SyntheticSpec, seed: int) -> SyntheticData:
    spec.validate()
    rng = np.random.default_rng(seed)
    n = spec.n_customers
    n_comp = max(1, int(round(spec.competitor_ratio * n)))
    n_land = max(1, int(round(spec.landline_ratio * n)))
    bounds = month_bounds(spec.baseline, spec.months)
    t_end, t_start = bounds[0], bounds[-1]

    home_ids = np.array([f"HOME:9{idx:08d}" for idx in range(n)], dtype=object)
    comp_ids = [f"COMPETITOR:4{idx:08d}" for idx in range(n_comp)]
    land_ids = np.array([f"LANDLINE:1{idx:07d}" for idx in range(n_land)], dtype=object)

    # labels, exact count, plus a stratified set of recent activations
    n_churn = int(round(spec.churn_rate * n))
    churn = np.zeros(n, dtype=bool)
    churn[rng.choice(n, n_churn, replace=False)] = True
    recent = np.zeros(n, dtype=bool)
    for cls_mask in (churn, ~churn):
        members = np.flatnonzero(cls_mask)
        k = int(round(spec.recent_activation_share * len(members)))
        if k:
            recent[rng.choice(members, k, replace=False)] = True

    # node universe: [home | competitor | landline | shadow lines]
    n_comm = max(1, int(np.ceil(n / spec.community_size)))
    home_comm = rng.integers(0, n_comm, n)
    comp_comm = rng.integers(0, n_comm, n_comp)
    comp_off, land_off = n, n + n_comp

    comm_home = [[] for _ in range(n_comm)]
    for i, c in enumerate(home_comm):
        comm_home[c].append(i)
    comm_comp = [[] for _ in range(n_comm)]
    for j, c in enumerate(comp_comm):
        comm_comp[c].append(comp_off + j)
    comm_home = [np.array(m, dtype=np.int64) for m in comm_home]
    comm_comp = [np.array(m, dtype=np.int64) for m in comm_comp]

    # competitor propensity: churners lean further toward the competitor
    comp_pref = rng.beta(2.0, 9.0, n) + spec.competitor_boost * churn * spec.profile_signal
    comp_pref = np.clip(comp_pref, 0.0, 0.9)

    src, dst = [], []
    stubs = 1 + rng.poisson(spec.friend_stubs - 1, n)
    for i in range(n):
        c = home_comm[i]
        for _ in range(stubs[i]):
            r = rng.random()
            if r < comp_pref[i] and len(comm_comp[c]):
                j = comm_comp[c][rng.integers(len(comm_comp[c]))]
            elif r < 0.93:
                pool = comm_home[c] if rng.random() < 0.8 else None
                j = pool[rng.integers(len(pool))] if pool is not None else rng.integers(n)
            else:
                j = land_off + rng.integers(n_land)
            if j != i:
                src.append(i)
                dst.append(int(j))
    pairs = np.unique(np.sort(np.array([src, dst], dtype=np.int64).T, axis=1), axis=0)
    pairs = pairs[pairs[:, 0] != pairs[:, 1]]

    # directed contact lists (both directions of every friendship)
    a = np.concatenate([pairs[:, 0], pairs[:, 1]])
    b = np.concatenate([pairs[:, 1], pairs[:, 0]])
    order = np.lexsort((b, a))
    a, b = a[order], b[order]
    n_nodes = n + n_comp + n_land
    strength = rng.gamma(1.0, 1.0, len(a)) + 0.05
    indptr = np.zeros(n_nodes + 1, dtype=np.int64)
    np.add.at(indptr, a + 1, 1)
    indptr = np.cumsum(indptr)
    seg_tot = np.add.reduceat(strength, indptr[:-1][np.diff(indptr) > 0]) if len(a) else np.array([])
    tot = np.zeros(n_nodes)
    tot[np.diff(indptr) > 0] = seg_tot
    cum_in_seg = np.cumsum(strength) - np.repeat(np.concatenate([[0.0], np.cumsum(strength)])[indptr[:-1]], np.diff(indptr))
    cumw = a + cum_in_seg / tot[a]

    deg = np.diff(indptr)
    lonely = np.flatnonzero(deg[:n] == 0)
    if len(lonely):
        raise RuntimeError("generator produced a customer without contacts")

    # activation dates
    base_ts = pd.Timestamp(spec.baseline, tz="UTC")
    recent_lo = (base_ts - pd.DateOffset(months=spec.recent_activation_months)).value // 10**9
    act_secs = np.where(
        recent,
        rng.integers(recent_lo, t_end - 7 * 86400, n),
        t_start - rng.integers(30 * 86400, 10 * 365 * 86400, n),
    )
    act_day = (act_secs // 86400) * 86400

    # monthly activity multipliers
    months = spec.months
    lam = rng.gamma(2.0, spec.mean_outgoing_per_month / 2.0, n)
    mult = np.ones((n, months))
    onset = rng.integers(1, spec.max_onset_months + 1, n)
    for m in range(1, months + 1):
        in_decline = churn & (m <= onset)
        mult[in_decline, m - 1] = spec.activity_decay ** ((onset[in_decline] - m + 1) / 1.5)
    dips = np.flatnonzero(~churn & (rng.random(n) < spec.active_dip_share))
    dip_month = rng.integers(1, min(3, months) + 1, len(dips))
    mult[dips, dip_month - 1] *= rng.uniform(0.3, 0.7, len(dips))
    mult *= rng.lognormal(0.0, 0.15, (n, months))

    counts = rng.poisson(lam[:, None] * mult)
    # months entirely before activation carry nothing
    month_start = bounds[1:]
    month_end = bounds[:-1]
    frac_live = np.clip((month_end[None, :] - act_day[:, None]) / (month_end - month_start)[None, :], 0, 1)
    counts = rng.binomial(counts, frac_live)

    owner = np.repeat(np.repeat(np.arange(n), months), counts.ravel())
    month_idx = np.repeat(np.tile(np.arange(months), n), counts.ravel())
    lo = np.maximum(month_start[month_idx], act_day[owner])
    hi = month_end[month_idx]
    t = lo + (rng.random(len(owner)) * (hi - lo)).astype(np.int64)
    contact = b[_segment_choice(rng, owner, indptr, cumw)]

    # inbound traffic from competitor and landline contacts
    ext = np.arange(n, n_nodes)
    ext_rate = rng.gamma(2.0, 1.0, len(ext)) * deg[ext]
    ext_counts = rng.poisson(ext_rate[:, None] * np.ones((1, months)))
    e_owner = np.repeat(np.repeat(ext, months), ext_counts.ravel())
    e_month = np.repeat(np.tile(np.arange(months), len(ext)), ext_counts.ravel())
    e_t = month_start[e_month] + (rng.random(len(e_owner)) * (month_end - month_start)[e_month]).astype(np.int64)
    e_contact = b[_segment_choice(rng, e_owner, indptr, cumw)] if len(e_owner) else np.array([], dtype=np.int64)
    # external-to-external traffic never enters home records
    keep = e_contact < n
    e_owner, e_t, e_contact = e_owner[keep], e_t[keep], e_contact[keep]
    # no traffic with a home line before it exists
    keep = e_t >= act_day[e_contact]
    e_owner, e_t, e_contact = e_owner[keep], e_t[keep], e_contact[keep]

    # competitor shadow lines (churners) and dual-SIM lines (some actives)
    shadow_owner = np.flatnonzero(churn & (rng.random(n) < spec.shadow_share))
    dual_owner = np.flatnonzero(~churn & ~recent & (rng.random(n) < spec.dual_sim_share))
    line_owner = np.concatenate([shadow_owner, dual_owner])
    is_shadow = np.concatenate([np.ones(len(shadow_owner), bool), np.zeros(len(dual_owner), bool)])
    s_src, s_dst, s_t = [], [], []
    three_months = (base_ts - pd.DateOffset(months=3)).value // 10**9
    line_ids = []
    for li, (i, shadow) in enumerate(zip(line_owner, is_shadow)):
        line_node = n_nodes + li
        line_ids.append(f"COMPETITOR:5{li:08d}")
        friends = b[indptr[i]:indptr[i + 1]]
        friends = friends[friends < land_off]
        if not len(friends):
            continue
        frac = rng.uniform(0.3, 0.8) if shadow else rng.uniform(0.15, 0.5)
        k = max(1, int(round(frac * len(friends))))
        chosen = rng.choice(friends, k, replace=False)
        start = rng.integers(three_months, t_end - 14 * 86400) if shadow else t_start
        span = t_end - start
        for f in chosen:
            c = rng.poisson(3.0 * span / (30 * 86400)) + 1
            times = start + (rng.random(c) * span).astype(np.int64)
            outgoing = rng.random(c) < 0.5
            s_src.extend(np.where(outgoing, line_node, f))
            s_dst.extend(np.where(outgoing, f, line_node))
            s_t.extend(times)
    s_src = np.array(s_src, dtype=np.int64)
    s_dst = np.array(s_dst, dtype=np.int64)
    s_t = np.array(s_t, dtype=np.int64)
    if len(s_t):
        ok = np.ones(len(s_t), bool)
        home_side = np.where(s_src < n, s_src, s_dst)
        is_home = home_side < n
        ok[is_home] = s_t[is_home] >= act_day[home_side[is_home]]
        s_src, s_dst, s_t = s_src[ok], s_dst[ok], s_t[ok]

    all_ids = np.concatenate([home_ids, np.array(comp_ids, dtype=object), land_ids,
                              np.array(line_ids, dtype=object)])
    ev_src = np.concatenate([owner, e_owner, s_src])
    ev_dst = np.concatenate([contact, e_contact, s_dst])
    ev_t = np.concatenate([t, e_t, s_t])
    n_ev = len(ev_src)

    # per-customer usage traits with churn drift
    sig = spec.profile_signal
    drop_p = np.clip(rng.beta(1.5, 60.0, n) + 0.012 * churn * sig, 0, 0.5)
    u = rng.random(n_ev)
    kind = np.where(u < 0.6, "CALL", np.where(u < 0.94, "SMS", "MMS")).astype(object)
    is_call = kind == "CALL"
    home_src = ev_src < n
    p_drop = np.where(home_src, drop_p[np.minimum(ev_src, n - 1)], 0.02)
    dropped = is_call & (rng.random(n_ev) < p_drop)
    dur = np.where(is_call, np.round(rng.lognormal(4.3, 0.9, n_ev)), 0.0)
    unanswered = is_call & ~dropped & (rng.random(n_ev) < 0.08)
    dur[unanswered] = 0.0
    dur[dropped] = np.round(dur[dropped] * rng.uniform(0.05, 0.4, int(dropped.sum())))

    n_cells = max(50, n // 20)
    home_cell = rng.integers(0, n_cells, (n, 3))
    cell_owner = np.where(home_src, ev_src, np.minimum(ev_dst, n - 1))
    cells = home_cell[cell_owner, rng.integers(0, 3, n_ev)]

    # data sessions
    internet = rng.random(n) < spec.internet_user_share
    fast_share = np.clip(rng.beta(4.0, 2.0, n) - 0.15 * churn * sig, 0.0, 1.0)
    mu_data = np.where(internet, rng.gamma(2.0, spec.mean_data_sessions_per_month / 2.0, n), 0.0)
    d_counts = rng.binomial(rng.poisson(mu_data[:, None] * mult), frac_live)
    d_owner = np.repeat(np.repeat(np.arange(n), months), d_counts.ravel())
    d_month = np.repeat(np.tile(np.arange(months), n), d_counts.ravel())
    d_lo = np.maximum(month_start[d_month], act_day[d_owner])
    d_t = d_lo + (rng.random(len(d_owner)) * (month_end[d_month] - d_lo)).astype(np.int64)
    fast = rng.random(len(d_owner)) < fast_share[d_owner]
    rat = np.where(fast, np.where(rng.random(len(d_owner)) < 0.5, "G3", "G4"), "G2").astype(object)
    up = np.round(rng.lognormal(11.0, 1.0, len(d_owner))).astype(np.int64) + 1
    down = np.round(rng.lognormal(13.0, 1.2, len(d_owner))).astype(np.int64) + 1
    d_cells = home_cell[d_owner, rng.integers(0, 3, len(d_owner))]

    cdr = pd.DataFrame({
        "ts": np.concatenate([ev_t, d_t]),
        "caller": np.concatenate([all_ids[ev_src], home_ids[d_owner]]),
        "callee": np.concatenate([all_ids[ev_dst], np.full(len(d_owner), "", dtype=object)]),
        "event_kind": np.concatenate([kind, np.full(len(d_owner), "DATA", dtype=object)]),
        "duration_s": np.concatenate([dur, np.zeros(len(d_owner))]),
        "bytes_up": np.concatenate([np.zeros(n_ev, np.int64), up]),
        "bytes_down": np.concatenate([np.zeros(n_ev, np.int64), down]),
        "rat": np.concatenate([np.full(n_ev, "", dtype=object), rat]),
        "dropped": np.concatenate([dropped, np.zeros(len(d_owner), bool)]),
        "cell_id": np.concatenate([cells, d_cells]),
    })
    cdr = cdr[(cdr["ts"] >= t_start) & (cdr["ts"] < t_end)]
    cdr = _enforce_final_month_gap(cdr, churn, home_ids, bounds, rng)
    cdr = cdr.sort_values(["ts", "caller", "callee", "event_kind"], kind="mergesort").reset_index(drop=True)
    cdr["cell_id"] = "C" + cdr["cell_id"].astype(np.int64).astype(str)
    cdr.insert(0, "timestamp", pd.to_datetime(cdr.pop("ts"), unit="s", utc=True))
    cdr["caller_op"] = cdr["caller"].str.partition(":")[0]
    cdr["callee_op"] = cdr["callee"].str.partition(":")[0]

    profiles = _profiles(spec, rng, home_ids, churn, act_day)
    labels = [LabelRecord(CustomerId(Operator.HOME, hid.split(":", 1)[1]),
                          Label.CHURN if c else Label.ACTIVE)
              for hid, c in zip(home_ids, churn)]
    return SyntheticData(cdr, profiles, labels)


def _enforce_final_month_gap(cdr, churn, home_ids, bounds, rng):
    """Thin churners' final-month outgoing traffic until their mean count is
    strictly below that of active customers."""
    n = len(home_ids)
    idx = pd.Index(home_ids)
    final = (cdr["ts"] >= bounds[1]) & (cdr["event_kind"] != "DATA")
    pos = idx.get_indexer(cdr["caller"].where(final, ""))
    out_counts = np.bincount(pos[pos >= 0], minlength=n)
    mean_c = out_counts[churn].mean()
    mean_a = out_counts[~churn].mean()
    if mean_c < mean_a:
        return cdr
    rows = np.flatnonzero((pos >= 0) & churn[np.maximum(pos, 0)])
    excess = int(np.floor((mean_c - mean_a) * churn.sum())) + 1
    drop = rng.choice(rows, min(excess, len(rows)), replace=False)
    return cdr.drop(cdr.index[drop])


BRANDS = [f"brand_{k:02d}" for k in range(45)]


def _profiles(spec, rng, home_ids, churn, act_day):
    n = len(home_ids)
    sig = spec.profile_signal
    base_year = spec.baseline.year
    age = np.clip(np.round(rng.normal(38.0 - 5.0 * churn * sig, 11.0, n)), 16, 85)
    birth_year = (base_year - age).astype(int)
    birth_missing = rng.random(n) < 0.03
    balance = np.round(rng.lognormal(np.log(2500.0) - 0.45 * churn * sig, 0.9, n), 2)
    balance_missing = rng.random(n) < 0.04
    gender = rng.choice(np.array(["M", "F"], dtype=object), n, p=[0.55, 0.45])
    gender_missing = rng.random(n) < 0.06
    sub_type = rng.choice(np.array(["prepaid_basic", "prepaid_plus", "youth", "business"], dtype=object),
                          n, p=[0.55, 0.25, 0.15, 0.05])
    zipf = 1.0 / np.arange(1, len(BRANDS) + 1) ** 1.1
    brand = rng.choice(np.array(BRANDS, dtype=object), n, p=zipf / zipf.sum())
    device_count = 1 + rng.poisson(0.4 + 0.2 * churn * sig, n)
    complaints = rng.poisson(0.3 + 0.3 * churn * sig, n)
    dual_sim = rng.random(n) < (0.3 + 0.1 * churn * sig)
    offer_bonus = np.where(rng.random(n) < 0.08, np.round(rng.uniform(0, 500, n), 1), np.nan)
    profiles = []
    for i in range(n):
        cid = CustomerId.parse(home_ids[i])
        attrs = {
            "contract_id": float(100000 + i),
            "balance": None if balance_missing[i] else float(balance[i]),
            "gender": None if gender_missing[i] else gender[i],
            "subscription_type": sub_type[i],
            "device_brand": brand[i],
            "device_count": float(device_count[i]),
            "complaint_count": float(complaints[i]),
            "dual_sim": "yes" if dual_sim[i] else "no",
            "offer_bonus": None if np.isnan(offer_bonus[i]) else float(offer_bonus[i]),
            "legacy_config": None,
        }
        profiles.append(CustomerProfile(
            cid,
            dt.datetime.fromtimestamp(int(act_day[i]), dt.timezone.utc).date(),
            None if birth_missing[i] else int(birth_year[i]),
            attrs,
        ))
    return profiles


def generate_synthetic(spec: SyntheticSpec, seed: int, outdir) -> dict[str, Path]:
    """Write ``cdr.csv``, ``profiles.csv`` and ``labels.csv`` into ``outdir``."""
    data = simulate(spec, seed)
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths = {
        "cdr": outdir / "cdr.csv",
        "profiles": outdir / "profiles.csv",
        "labels": outdir / "labels.csv",
    }
    write_cdr_frame(paths["cdr"], data.cdr)
    write_profiles(paths["profiles"], data.profiles)
    write_labels(paths["labels"], data.labels)
    return paths
