import base64
import json
from importlib import resources

import numpy as np
import pytest

from tanksworld import ProtocolError
from tanksworld.protocol import (
    ActionMsg,
    Assigned,
    EntitySummary,
    ErrorMsg,
    Hello,
    ObsFrame,
    ObstacleSummary,
    PROTOCOL_VERSION,
    ResetMsg,
    RewardSummary,
    StateFrame,
    decode_grid,
    decode_message,
    encode_grid,
    encode_message,
)

SID = "testsession"


def golden_lines():
    data = resources.files("tanksworld").joinpath("data/golden_messages.jsonl")
    return data.read_text(encoding="utf-8").splitlines()


def sample_state_frame():
    return StateFrame(
        session_id=SID, tick=9, done=False,
        entities=(
            EntitySummary(id=0, team="red", x=1.5, y=2.5, heading=0.25, alive=True),
            EntitySummary(id=6, team="blue", x=9.0, y=8.0, heading=3.0, alive=False),
        ),
        obstacles=(ObstacleSummary(x=5.0, y=5.0, r=1.25),),
        arena_side=100.0, comm_range=30.0,
        visibility={"enemies": (6,), "neutrals": ()},
        rewards={0: RewardSummary(1, 0, 0, 0, 1.0)},
        scores={"red": 1.0, "blue": 0.0},
    )


class TestRoundTrip:
    @pytest.mark.parametrize("message", [
        Hello(session_id=SID, role="agent", tanks=(1, 2)),
        Hello(session_id=SID, role="viewer", tanks=()),
        Assigned(session_id=SID, tanks=(0,), config=("team_size = 5",)),
        ObsFrame(session_id=SID, tick=1, tank=0,
                 grid=base64.b64encode(bytes(4 * 128 * 128)).decode(),
                 done=False),
        ActionMsg(session_id=SID, tick=2, tank=1, throttle=0.5, steer=-1.0,
                  fire=0.0),
        ResetMsg(session_id=SID, seed=7),
        ErrorMsg(session_id=SID, code="x", text="y"),
    ])
    def test_object_round_trip(self, message):
        assert decode_message(encode_message(message)) == message

    def test_state_frame_round_trip(self):
        frame = sample_state_frame()
        assert decode_message(encode_message(frame)) == frame

    def test_golden_corpus_byte_exact(self):
        lines = golden_lines()
        assert len(lines) >= 10
        for line in lines:
            assert encode_message(decode_message(line)) == line

    def test_golden_corpus_covers_every_type(self):
        kinds = {json.loads(line)["type"] for line in golden_lines()}
        assert kinds == {
            "hello", "assigned", "state", "obs", "action", "reset", "error",
        }

    def test_encoding_is_canonical(self):
        encoded = encode_message(ResetMsg(session_id=SID, seed=1))
        assert encoded == json.dumps(
            json.loads(encoded), sort_keys=True, separators=(",", ":")
        )


class TestActionClamping:
    def test_out_of_range_clamped_with_warning(self):
        raw = json.dumps({
            "v": PROTOCOL_VERSION, "sid": SID, "type": "action",
            "tick": 0, "tank": 1, "throttle": 0.0, "steer": 0.0, "fire": 7,
        })
        message = decode_message(raw)
        assert message.fire == 1.0
        assert message.clamped is True

    def test_in_range_not_flagged(self):
        message = decode_message(encode_message(
            ActionMsg(session_id=SID, tick=0, tank=0, throttle=1.0, steer=-1.0,
                      fire=0.5)
        ))
        assert message.clamped is False

    def test_clamped_flag_stays_off_the_wire(self):
        raw = json.dumps({
            "v": PROTOCOL_VERSION, "sid": SID, "type": "action",
            "tick": 0, "tank": 1, "throttle": 2.0, "steer": 0.0, "fire": 0.0,
        })
        encoded = encode_message(decode_message(raw))
        assert "clamped" not in encoded


class TestStrictDecoding:
    def base_action(self):
        return {
            "v": PROTOCOL_VERSION, "sid": SID, "type": "action",
            "tick": 0, "tank": 1, "throttle": 0.0, "steer": 0.0, "fire": 0.0,
        }

    def test_unknown_type(self):
        with pytest.raises(ProtocolError, match="unknown message type"):
            decode_message(json.dumps({"v": PROTOCOL_VERSION, "sid": SID,
                                       "type": "warp"}))

    def test_version_mismatch(self):
        payload = self.base_action()
        payload["v"] = "twp/2"
        with pytest.raises(ProtocolError, match="version"):
            decode_message(json.dumps(payload))

    def test_missing_field_named(self):
        payload = self.base_action()
        del payload["steer"]
        with pytest.raises(ProtocolError, match="steer"):
            decode_message(json.dumps(payload))

    def test_unknown_field_named(self):
        payload = self.base_action()
        payload["boost"] = 1
        with pytest.raises(ProtocolError, match="boost"):
            decode_message(json.dumps(payload))

    def test_wrong_type_rejected(self):
        payload = self.base_action()
        payload["tick"] = "zero"
        with pytest.raises(ProtocolError, match="tick"):
            decode_message(json.dumps(payload))

    def test_truncated_frame(self):
        encoded = encode_message(ResetMsg(session_id=SID, seed=3))
        with pytest.raises(ProtocolError, match="JSON"):
            decode_message(encoded[: len(encoded) // 2])

    def test_nan_rejected(self):
        raw = ('{"fire":NaN,"sid":"x","steer":0,"tank":0,"throttle":0,'
               '"tick":0,"type":"action","v":"twp/1"}')
        with pytest.raises(ProtocolError):
            decode_message(raw)

    def test_bad_grid_length(self):
        payload = {
            "v": PROTOCOL_VERSION, "sid": SID, "type": "obs", "tick": 0,
            "tank": 0, "grid": base64.b64encode(b"short").decode(),
            "done": False,
        }
        with pytest.raises(ProtocolError, match="grid"):
            decode_message(json.dumps(payload))

    def test_bad_entity_field(self):
        frame = sample_state_frame()
        payload = json.loads(encode_message(frame))
        payload["entities"][0]["stealth"] = True
        with pytest.raises(ProtocolError, match="stealth"):
            decode_message(json.dumps(payload))

    def test_non_utf8_bytes(self):
        with pytest.raises(ProtocolError):
            decode_message(b"\xff\xfe garbage")


class TestEncodeDecodeFixpoint:
    def test_random_state_frames_reach_a_fixpoint(self):
        import numpy as np

        rng = np.random.default_rng(3)
        for _ in range(50):
            n = int(rng.integers(0, 6))
            frame = StateFrame(
                session_id="fuzz", tick=int(rng.integers(0, 1000)),
                done=bool(rng.random() < 0.5),
                entities=tuple(
                    EntitySummary(
                        id=i, team=("red", "blue", "neutral")[int(rng.integers(3))],
                        x=float(np.round(rng.uniform(0, 100), 6)),
                        y=float(np.round(rng.uniform(0, 100), 6)),
                        heading=float(np.round(rng.uniform(0, 6.28), 6)),
                        alive=bool(rng.random() < 0.9),
                    )
                    for i in range(n)
                ),
                obstacles=tuple(
                    ObstacleSummary(
                        x=float(np.round(rng.uniform(0, 100), 3)),
                        y=float(np.round(rng.uniform(0, 100), 3)),
                        r=float(np.round(rng.uniform(1, 4), 3)),
                    )
                    for _ in range(int(rng.integers(0, 4)))
                ),
                arena_side=100.0, comm_range=float(rng.integers(0, 100)),
                visibility=None if rng.random() < 0.3 else {
                    "enemies": tuple(int(v) for v in rng.integers(0, 9, 2)),
                    "neutrals": (),
                },
                rewards={
                    int(i): RewardSummary(
                        int(rng.integers(0, 3)), 0, 0, int(rng.integers(0, 2)),
                        float(rng.integers(-3, 3)),
                    )
                    for i in rng.integers(0, 9, int(rng.integers(0, 3)))
                },
                scores={"red": float(rng.integers(-7, 6)),
                        "blue": float(rng.integers(-7, 6))},
            )
            once = encode_message(frame)
            decoded = decode_message(once)
            assert encode_message(decoded) == once  # canonical fixpoint
            assert decoded.tick == frame.tick
            assert len(decoded.entities) == n


class TestGridCodec:
    def test_round_trip(self):
        rng = np.random.default_rng(0)
        grid = rng.uniform(0.0, 1.0, size=(4, 128, 128)).astype(np.float32)
        encoded = encode_grid(grid)
        decoded = decode_grid(encoded)
        assert decoded.shape == (4, 128, 128)
        assert decoded.dtype == np.uint8
        assert np.abs(decoded / 255.0 - grid).max() <= 0.5 / 255.0 + 1e-6

    def test_wrong_size_rejected(self):
        with pytest.raises(ProtocolError):
            decode_grid(base64.b64encode(b"123").decode())
