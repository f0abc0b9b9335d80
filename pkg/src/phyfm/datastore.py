"""Deterministic dataset container and checkpoint IO.

Layout: ``manifest.json`` plus one directory per split (train/val/test),
each holding ``scenes.json`` and flat little-endian binary arrays (complex
values interleaved as (re, im) pairs on the last axis, row-major). Every
file carries a CRC-64 recorded in the manifest.

Every random draw derives from a splitmix64 chain over
(master_seed, scenario_index, sample_index, purpose, value-key), so any
scenario regenerates bit-identically in isolation and observations can be
re-synthesized at any SNR without touching stored channels.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, replace

import numpy as np

from .channel import assemble_channel, awgn, complex_to_interleaved, \
    interleaved_to_complex, normalize_channel, snr_to_sigma2
from .phytasks import (PolarCode, make_decoding_sample, make_detection_sample,
                       make_pilot_obs, make_polar_code)
from .profiles import Profile, get_profile, split_counts
from .propagation import trace_paths
from .scene import Scene, generate_scene, rasterize, sample_user_positions

FORMAT_VERSION = 1
SPLITS = ("train", "val", "test")

# purpose tags for the seed chain
TAG_SCENE = 1
TAG_USERS = 2
TAG_CE = 3
TAG_LOC = 4
TAG_DET_IDX = 5
TAG_DET = 6
TAG_PRE_IDX = 7
TAG_PRE = 8
TAG_DEC_BITS = 9
TAG_DEC = 10

_M64 = (1 << 64) - 1


class DatasetIntegrityError(RuntimeError):
    pass


def _splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & _M64
    z = x
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _M64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _M64
    return (z ^ (z >> 31)) & _M64


def mix64(*values) -> int:
    """Order-sensitive 64-bit mix of integer values."""
    h = 0x8BADF00DDEADBEEF
    for v in values:
        h = _splitmix64((h ^ (int(v) & _M64)) & _M64)
    return h


def _snr_key(value: float) -> int:
    return int(round(value * 1_000_000)) & _M64


# ---------------------------------------------------------------------------
# CRC-64 (ECMA polynomial, reflected, as used by xz)
# ---------------------------------------------------------------------------

_CRC_POLY = 0xC96C5795D7870F42
_CRC_TABLE = None


def _crc_table():
    global _CRC_TABLE
    if _CRC_TABLE is None:
        table = []
        for i in range(256):
            crc = i
            for _ in range(8):
                crc = (crc >> 1) ^ _CRC_POLY if crc & 1 else crc >> 1
            table.append(crc)
        _CRC_TABLE = table
    return _CRC_TABLE


def crc64(data: bytes) -> str:
    table = _crc_table()
    crc = _M64
    for byte in data:
        crc = table[(crc ^ byte) & 0xFF] ^ (crc >> 8)
    return f"{crc ^ _M64:016x}"


# ---------------------------------------------------------------------------
# per-scenario synthesis
# ---------------------------------------------------------------------------

@dataclass
class ScenarioBundle:
    index: int
    scene: Scene
    grid: np.ndarray          # (W, W) uint8
    positions: np.ndarray     # (J, K, 3)
    channels: np.ndarray      # (J, K, M, N_t) complex, normalized
    scales: np.ndarray        # (J, K) normalization factors
    obs: dict                 # per-task observation arrays, leading axis J


def _trace_user_channels(scene, profile, positions):
    """(K, M, N_t) normalized channels + scales for one sample."""
    geom = profile.geom
    k = positions.shape[0]
    channels = np.empty((k, geom.n_sub, geom.n_t), dtype=np.complex128)
    scales = np.empty(k)
    for i in range(k):
        paths = trace_paths(scene, scene.bs_pos, positions[i])
        h, scale = normalize_channel(assemble_channel(paths, geom))  # (N_t, M)
        channels[i] = h.T
        scales[i] = scale
    return channels, scales


def _sample_positions_with_coverage(scene, profile, master_seed, index, j):
    """User draw that retries (seeded) until every user has >= 1 path."""
    k = profile.tasks.k_users
    for attempt in range(100):
        seed = mix64(master_seed, index, j, TAG_USERS, attempt)
        positions = sample_user_positions(scene, k, seed)
        channels, scales = _trace_user_channels(scene, profile, positions)
        if all(np.any(channels[i] != 0) for i in range(k)):
            return positions, channels, scales
    raise RuntimeError(f"no propagation coverage in scenario {index}")


def sample_task_observations(channels, positions, code: PolarCode,
                             profile: Profile, master_seed: int,
                             scen_index: int, j: int,
                             snr_db=None, csi_snr_db=None, ebn0_db=None) -> dict:
    """All five task observations for one sample, from stored channels.

    SNR overrides regenerate observations at a different operating point;
    seeds include the SNR value so each (sample, SNR) pair is deterministic.
    """
    tasks = profile.tasks
    geom = profile.geom
    snr_db = tasks.snr_db if snr_db is None else snr_db
    csi_snr_db = tasks.csi_snr_db if csi_snr_db is None else csi_snr_db
    ebn0_db = tasks.ebn0_db if ebn0_db is None else ebn0_db

    h0 = channels[0].T                                   # (N_t, M), user 0
    ce = make_pilot_obs(h0, tasks.l_p_ce, snr_db,
                        mix64(master_seed, scen_index, j, TAG_CE, _snr_key(snr_db)))
    loc = make_pilot_obs(h0, tasks.l_p_loc, snr_db,
                         mix64(master_seed, scen_index, j, TAG_LOC, _snr_key(snr_db)))
    half = 0.5 * 10.0
    loc_pos = (positions[0, :2] + half) / (2 * half)     # normalized to [0, 1]^2

    m_det = int(np.random.default_rng(
        mix64(master_seed, scen_index, j, TAG_DET_IDX)).integers(0, geom.n_sub))
    h_m = channels[:, m_det, :].T                        # (N_t, K)
    det = make_detection_sample(h_m, tasks.l_d, snr_db,
                                mix64(master_seed, scen_index, j, TAG_DET,
                                      _snr_key(snr_db)), subcarrier=m_det)

    m_pre = int(np.random.default_rng(
        mix64(master_seed, scen_index, j, TAG_PRE_IDX)).integers(0, geom.n_sub))
    h_pre = channels[:, m_pre, :].T
    sigma2_csi = snr_to_sigma2(csi_snr_db)
    h_noisy = h_pre + awgn(h_pre.shape, sigma2_csi,
                           mix64(master_seed, scen_index, j, TAG_PRE,
                                 _snr_key(csi_snr_db)))

    bits = np.random.default_rng(
        mix64(master_seed, scen_index, j, TAG_DEC_BITS)).integers(
            0, 2, code.m).astype(np.uint8)
    dec = make_decoding_sample(bits, code, ebn0_db,
                               mix64(master_seed, scen_index, j, TAG_DEC,
                                     _snr_key(ebn0_db)))

    return {
        "ce_ypilot": ce.y_pilot,
        "loc_ypilot": loc.y_pilot,
        "loc_target": loc_pos,
        "det_subcarrier": m_det,
        "det_symbols": det.x,
        "det_received": det.y,
        "pre_subcarrier": m_pre,
        "pre_csi": h_noisy,
        "dec_bits": bits,
        "dec_codeword": dec.codeword,
        "dec_soft": dec.s_hat,
    }


def regenerate_scenario(master_seed: int, index: int, profile: Profile,
                        samples: int | None = None) -> ScenarioBundle:
    """Rebuild one scenario bit-identically from its coordinates."""
    samples = profile.samples_per_scenario if samples is None else samples
    scene = generate_scene(mix64(master_seed, index, TAG_SCENE), profile.scene)
    grid = rasterize(scene, profile.scene.grid_w).grid
    code = make_polar_code(profile.tasks.code_n, profile.tasks.code_m)

    k, geom = profile.tasks.k_users, profile.geom
    positions = np.empty((samples, k, 3))
    channels = np.empty((samples, k, geom.n_sub, geom.n_t), dtype=np.complex128)
    scales = np.empty((samples, k))
    obs_rows = []
    for j in range(samples):
        positions[j], channels[j], scales[j] = _sample_positions_with_coverage(
            scene, profile, master_seed, index, j)
        obs_rows.append(sample_task_observations(
            channels[j], positions[j], code, profile, master_seed, index, j))

    obs = {key: np.stack([row[key] for row in obs_rows]) for key in obs_rows[0]}
    return ScenarioBundle(index=index, scene=scene, grid=grid,
                          positions=positions, channels=channels,
                          scales=scales, obs=obs)


# ---------------------------------------------------------------------------
# dataset container
# ---------------------------------------------------------------------------

@dataclass
class Split:
    name: str
    scenario_indices: np.ndarray
    scenes: list
    grids: np.ndarray           # (S, W, W) uint8
    positions: np.ndarray       # (S*J, K, 3)
    channels: np.ndarray        # (S*J, K, M, N_t) complex
    scales: np.ndarray          # (S*J, K)
    obs: dict                   # task observation arrays, leading axis S*J
    samples_per_scenario: int

    @property
    def n_samples(self) -> int:
        return self.positions.shape[0]

    def scenario_of(self, sample: int) -> int:
        return sample // self.samples_per_scenario

    def grid_of(self, sample: int) -> np.ndarray:
        return self.grids[self.scenario_of(sample)]


@dataclass
class Dataset:
    root: str
    manifest: dict
    profile: Profile
    master_seed: int
    splits: dict

    @property
    def code(self) -> PolarCode:
        return make_polar_code(self.profile.tasks.code_n, self.profile.tasks.code_m)


_COMPLEX_ARRAYS = ("channels", "ce_ypilot", "loc_ypilot", "det_symbols",
                   "det_received", "pre_csi")
_DTYPES = {"scene_grids": "u1", "dec_bits": "u1", "dec_codeword": "u1",
           "det_subcarrier": "<u4", "pre_subcarrier": "<u4"}


def _to_file_array(name: str, arr: np.ndarray) -> np.ndarray:
    if name in _COMPLEX_ARRAYS or np.iscomplexobj(arr):
        arr = complex_to_interleaved(arr)
        return arr.astype("<f8")
    return arr.astype(_DTYPES.get(name, "<f8"))


def _from_file_array(name: str, arr: np.ndarray) -> np.ndarray:
    if name in _COMPLEX_ARRAYS:
        return interleaved_to_complex(arr)
    return arr


def _split_dir_arrays(split: Split) -> dict:
    arrays = {"scene_grids": split.grids, "user_positions": split.positions,
              "channels": split.channels, "channel_scales": split.scales}
    arrays.update(split.obs)
    return arrays


def write_dataset(root: str, dataset: Dataset):
    """Serialize; arrays as raw little-endian binaries with CRC-64s in the
    manifest. read(write(x)) is bit-identical."""
    os.makedirs(root, exist_ok=True)
    records = []
    files = {}
    for split_name, split in dataset.splits.items():
        sdir = os.path.join(root, split_name)
        os.makedirs(sdir, exist_ok=True)
        scenes_blob = json.dumps([s.to_dict() for s in split.scenes],
                                 indent=0, sort_keys=True).encode()
        scenes_rel = f"{split_name}/scenes.json"
        with open(os.path.join(root, scenes_rel), "wb") as fh:
            fh.write(scenes_blob)
        files[scenes_rel] = crc64(scenes_blob)
        for name, arr in _split_dir_arrays(split).items():
            out = _to_file_array(name, np.ascontiguousarray(arr))
            rel = f"{split_name}/{name}.{'u8' if out.dtype == np.uint8 else 'bin'}"
            blob = out.tobytes()
            with open(os.path.join(root, rel), "wb") as fh:
                fh.write(blob)
            records.append({"name": f"{split_name}/{name}",
                            "file": rel, "dtype": str(out.dtype),
                            "shape": list(out.shape), "byte_offset": 0,
                            "crc64": crc64(blob)})

    manifest = dict(dataset.manifest)
    manifest["arrays"] = records
    manifest["files"] = files
    blob = json.dumps(manifest, indent=2, sort_keys=True).encode()
    with open(os.path.join(root, "manifest.json"), "wb") as fh:
        fh.write(blob)


def read_dataset(root: str) -> Dataset:
    path = os.path.join(root, "manifest.json")
    if not os.path.exists(path):
        raise DatasetIntegrityError(f"missing manifest: {path}")
    with open(path, "rb") as fh:
        manifest = json.loads(fh.read())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise DatasetIntegrityError(
            f"unsupported format_version {manifest.get('format_version')}")

    profile = replace(get_profile(manifest["profile"]),
                      scenarios=manifest["scenarios"],
                      samples_per_scenario=manifest["samples_per_scenario"])

    raw = {}
    for rec in manifest["arrays"]:
        fpath = os.path.join(root, rec["file"])
        if not os.path.exists(fpath):
            raise DatasetIntegrityError(f"missing file: {rec['file']}")
        with open(fpath, "rb") as fh:
            blob = fh.read()
        if crc64(blob) != rec["crc64"]:
            raise DatasetIntegrityError(f"checksum mismatch in {rec['file']}")
        expected = int(np.prod(rec["shape"])) * np.dtype(rec["dtype"]).itemsize
        if expected != len(blob):
            raise DatasetIntegrityError(f"length mismatch in {rec['file']}")
        raw[rec["name"]] = np.frombuffer(blob, dtype=rec["dtype"]).reshape(rec["shape"]).copy()

    splits = {}
    for split_name, meta in manifest["splits"].items():
        scenes_rel = f"{split_name}/scenes.json"
        with open(os.path.join(root, scenes_rel), "rb") as fh:
            blob = fh.read()
        if crc64(blob) != manifest["files"][scenes_rel]:
            raise DatasetIntegrityError(f"checksum mismatch in {scenes_rel}")
        scenes = [Scene.from_dict(d) for d in json.loads(blob)]

        def get(name):
            return _from_file_array(name, raw[f"{split_name}/{name}"])

        obs = {name: get(name) for name in
               ("ce_ypilot", "loc_ypilot", "loc_target", "det_subcarrier",
                "det_symbols", "det_received", "pre_subcarrier", "pre_csi",
                "dec_bits", "dec_codeword", "dec_soft")}
        splits[split_name] = Split(
            name=split_name,
            scenario_indices=np.arange(meta["start"], meta["start"] + meta["count"]),
            scenes=scenes, grids=get("scene_grids"),
            positions=get("user_positions"), channels=get("channels"),
            scales=get("channel_scales"), obs=obs,
            samples_per_scenario=manifest["samples_per_scenario"])

    return Dataset(root=root, manifest=manifest, profile=profile,
                   master_seed=manifest["master_seed"], splits=splits)


def generate_dataset(profile: Profile, scenarios: int, samples: int,
                     master_seed: int, root: str) -> Dataset:
    """Synthesize scenes -> channels -> task samples and write the container.

    Scenario indices are assigned to splits contiguously (train, val, test);
    splits are therefore disjoint by construction.
    """
    profile = replace(profile, scenarios=scenarios, samples_per_scenario=samples)
    counts = split_counts(profile, scenarios)
    starts = {"train": 0, "val": counts["train"],
              "test": counts["train"] + counts["val"]}

    splits = {}
    for split_name in SPLITS:
        start, count = starts[split_name], counts[split_name]
        bundles = [regenerate_scenario(master_seed, idx, profile, samples)
                   for idx in range(start, start + count)]
        obs = {key: np.concatenate([b.obs[key] for b in bundles])
               for key in bundles[0].obs}
        splits[split_name] = Split(
            name=split_name,
            scenario_indices=np.arange(start, start + count),
            scenes=[b.scene for b in bundles],
            grids=np.stack([b.grid for b in bundles]),
            positions=np.concatenate([b.positions for b in bundles]),
            channels=np.concatenate([b.channels for b in bundles]),
            scales=np.concatenate([b.scales for b in bundles]),
            obs=obs, samples_per_scenario=samples)

    tasks = profile.tasks
    manifest = {
        "format_version": FORMAT_VERSION,
        "profile": profile.name,
        "scenarios": scenarios,
        "samples_per_scenario": samples,
        "master_seed": master_seed,
        "splits": {name: {"start": starts[name], "count": counts[name]}
                   for name in SPLITS},
        "system": {
            "n_h": profile.geom.n_h, "n_v": profile.geom.n_v,
            "n_sub": profile.geom.n_sub, "f_c": profile.geom.f_c,
            "delta_f": profile.geom.delta_f, "spacing": profile.geom.spacing,
            "k_users": tasks.k_users, "l_p_ce": tasks.l_p_ce,
            "l_p_loc": tasks.l_p_loc, "l_d": tasks.l_d,
            "code_n": tasks.code_n, "code_m": tasks.code_m,
            "snr_db": tasks.snr_db, "csi_snr_db": tasks.csi_snr_db,
            "ebn0_db": tasks.ebn0_db, "p_max": tasks.p_max,
            "grid_w": profile.scene.grid_w,
        },
    }
    dataset = Dataset(root=root, manifest=manifest, profile=profile,
                      master_seed=master_seed, splits=splits)
    write_dataset(root, dataset)
    return read_dataset(root)


def split_from_bundles(name: str, bundles: list, samples: int) -> Split:
    """In-memory Split from regenerated scenario bundles (no files written);
    used to extend a split with extra per-scenario samples."""
    obs = {key: np.concatenate([b.obs[key] for b in bundles])
           for key in bundles[0].obs}
    return Split(name=name,
                 scenario_indices=np.array([b.index for b in bundles]),
                 scenes=[b.scene for b in bundles],
                 grids=np.stack([b.grid for b in bundles]),
                 positions=np.concatenate([b.positions for b in bundles]),
                 channels=np.concatenate([b.channels for b in bundles]),
                 scales=np.concatenate([b.scales for b in bundles]),
                 obs=obs, samples_per_scenario=samples)


# ---------------------------------------------------------------------------
# checkpoints: flat (name, shape, float64-LE values) with a JSON index
# ---------------------------------------------------------------------------

def save_checkpoint(state: dict, path: str):
    os.makedirs(path, exist_ok=True)
    index = []
    chunks = []
    offset = 0
    for name in sorted(state):
        arr = np.ascontiguousarray(state[name], dtype="<f8")
        blob = arr.tobytes()
        index.append({"name": name, "shape": list(arr.shape),
                      "byte_offset": offset, "count": arr.size})
        chunks.append(blob)
        offset += len(blob)
    payload = b"".join(chunks)
    with open(os.path.join(path, "params.f64"), "wb") as fh:
        fh.write(payload)
    meta = {"format_version": FORMAT_VERSION, "arrays": index,
            "crc64": crc64(payload)}
    with open(os.path.join(path, "index.json"), "w") as fh:
        json.dump(meta, fh, indent=2)


def load_checkpoint(path: str) -> dict:
    with open(os.path.join(path, "index.json")) as fh:
        meta = json.load(fh)
    with open(os.path.join(path, "params.f64"), "rb") as fh:
        payload = fh.read()
    if crc64(payload) != meta["crc64"]:
        raise DatasetIntegrityError("checkpoint payload checksum mismatch")
    state = {}
    for rec in meta["arrays"]:
        start = rec["byte_offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=rec["count"],
                            offset=start).reshape(rec["shape"])
        state[rec["name"]] = arr.copy()
    return state
