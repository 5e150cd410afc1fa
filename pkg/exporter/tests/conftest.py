import json
from pathlib import Path

import numpy as np
import pytest

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def raw_captions() -> Path:
    return DATA / "raw_captions.jsonl"


@pytest.fixture(scope="session")
def sample_videos(tmp_path_factory) -> Path:
    """Two small synthetic videos plus the JSONL list describing them."""
    import cv2

    root = tmp_path_factory.mktemp("videos")
    entries = []
    for k, video_id in enumerate(["sample1", "sample2"]):
        path = root / f"{video_id}.avi"
        writer = cv2.VideoWriter(
            str(path), cv2.VideoWriter_fourcc(*"MJPG"), 5.0, (48, 32)
        )
        assert writer.isOpened()
        for t in range(12):
            frame = np.zeros((32, 48, 3), dtype=np.uint8)
            frame[:, :, k] = 40 + 15 * t
            frame[t:t + 8, t:t + 8, 2 - k] = 220
            writer.write(frame)
        writer.release()
        entries.append({"video_id": video_id, "path": str(path)})
    listing = root / "videos.jsonl"
    listing.write_text("".join(json.dumps(e) + "\n" for e in entries))
    return listing
