import io
import logging
import unittest

from diar_dialogue.timeline import (
    DiarSegment,
    Recording,
    TimeInterval,
    chunk_recording,
    clip_segment,
    find_gaps,
    format_centiseconds,
    overlap_duration,
    to_centiseconds
)
from tests.synthetic import make_corpus


def seg(speaker, start, end):
    return DiarSegment(speaker, TimeInterval.from_seconds(start, end))


class TestTimeline(unittest.TestCase):
    """
    Unit test for the time model and the chunker.

    This test validates:
    - Seconds are stored as centiseconds with half-up rounding.
    - Intervals and recordings reject invalid bounds.
    - Chunks tile the recording, respect the duration limits and cut inside
      silences when one is available.
    """

    def setUp(self):
        """
        Set up in-memory logging.
        """
        self.log_stream = io.StringIO()
        self.log_handler = logging.StreamHandler(self.log_stream)
        self.logger = logging.getLogger()
        self.logger.handlers = []
        self.logger.addHandler(self.log_handler)
        self.logger.setLevel(logging.INFO)

    def tearDown(self):
        """
        Remove the in-memory log handler.
        """
        self.logger.removeHandler(self.log_handler)
        self.log_handler.close()

    def test_centisecond_conversion(self):
        """
        Test rounding and formatting of times.
        """
        self.assertEqual(to_centiseconds("3.20"), 320)
        self.assertEqual(to_centiseconds(0.005), 1,
                         "Ties must round half up.")
        self.assertEqual(to_centiseconds(0.125), 13)
        self.assertEqual(to_centiseconds(12), 1200)
        self.assertEqual(format_centiseconds(320), "3.20")
        self.assertEqual(format_centiseconds(5), "0.05")
        with self.assertRaises(ValueError):
            to_centiseconds("abc")
        with self.assertRaises(ValueError):
            to_centiseconds(float("nan"))

    def test_interval_validation(self):
        """
        Test that invalid intervals are rejected.
        """
        with self.assertRaises(ValueError):
            TimeInterval(200, 100)
        with self.assertRaises(ValueError):
            TimeInterval(-1, 100)
        with self.assertRaises(TypeError):
            TimeInterval(1.5, 2.0)
        interval = TimeInterval.from_seconds(0.5, 1.4)
        self.assertEqual((interval.start, interval.end), (0.5, 1.4))
        self.assertEqual(interval.duration_cs, 90)
        self.assertEqual(
            overlap_duration(TimeInterval.from_seconds(0, 5),
                             TimeInterval.from_seconds(3, 8)),
            2.0
        )
        self.assertEqual(
            overlap_duration(TimeInterval.from_seconds(0, 1),
                             TimeInterval.from_seconds(2, 3)),
            0.0
        )

    def test_recording_sorts_and_bounds_segments(self):
        """
        Test that segments are sorted and must stay within the recording.
        """
        rec = Recording("m1", 1000, (seg("B", 3, 4), seg("A", 3, 4),
                                     seg("A", 1, 2)))
        self.assertEqual(
            [(s.speaker, s.interval.start) for s in rec.segments],
            [("A", 1.0), ("A", 3.0), ("B", 3.0)],
            "Segments must be ordered by (start, end, speaker)."
        )
        self.assertEqual(rec.speakers, ["A", "B"])
        with self.assertRaises(ValueError):
            Recording("m1", 300, (seg("A", 1, 4),))
        with self.assertRaises(ValueError):
            DiarSegment("", TimeInterval(0, 10))

    def test_clip_segment(self):
        """
        Test clipping and re-basing a segment into a window.
        """
        window = TimeInterval.from_seconds(10, 20)
        clipped = clip_segment(seg("A", 8, 12), window)
        self.assertEqual(clipped.interval, TimeInterval(0, 200))
        self.assertIsNone(clip_segment(seg("A", 19.97, 25), window),
                          "A 0.03 s sliver must be dropped.")

    def test_find_gaps(self):
        """
        Test that silences between and around segments are found.
        """
        rec = Recording("m1", 1000, (seg("A", 1, 4), seg("B", 3, 6)))
        self.assertEqual(find_gaps(rec), [TimeInterval(0, 100),
                                          TimeInterval(600, 1000)])

    def test_chunk_cuts_in_silence(self):
        """
        Test that a silence inside the cut range is split at its midpoint.
        """
        rec = Recording("m1", 3500, (seg("A", 0, 14), seg("B", 18, 35)))
        chunks = chunk_recording(rec, 15, 25)

        self.assertEqual(len(chunks), 2)
        self.assertEqual(chunks[0].window, TimeInterval(0, 1650),
                         "Cut must be the midpoint of [15, 18].")
        self.assertEqual(chunks[1].window, TimeInterval(1650, 3500))
        self.assertEqual([c.chunk_id for c in chunks],
                         ["m1_0000", "m1_0001"])
        self.assertEqual(chunks[0].segments, (seg("A", 0, 14),))
        self.assertEqual(chunks[1].segments, (seg("B", 1.5, 18.5),),
                         "Segments must be re-based to window time.")

    def test_chunk_hard_cut(self):
        """
        Test hard cuts at max_dur when speech never pauses.
        """
        rec = Recording("m1", 6000, (seg("A", 0, 60),))
        chunks = chunk_recording(rec, 15, 25)

        self.assertEqual([c.window for c in chunks], [
            TimeInterval(0, 2500),
            TimeInterval(2500, 5000),
            TimeInterval(5000, 6000),
        ])
        self.assertEqual([c.segments[0].interval for c in chunks], [
            TimeInterval(0, 2500),
            TimeInterval(0, 2500),
            TimeInterval(0, 1000),
        ])

    def test_chunk_drops_slivers(self):
        """
        Test that pieces shorter than min_clip_duration are dropped and
        logged.
        """
        rec = Recording("m1", 4000, (seg("A", 0, 25.03),))
        chunks = chunk_recording(rec, 15, 25)

        self.assertEqual(len(chunks), 2)
        self.assertEqual(chunks[1].segments, (),
                         "The 0.03 s tail must not survive clipping.")
        logs = self.log_stream.getvalue()
        self.assertIn("Dropped 1 segment slivers", logs)

    def test_chunk_rejects_bad_limits(self):
        """
        Test validation of the chunk duration limits.
        """
        rec = Recording("m1", 1000, (seg("A", 0, 10),))
        with self.assertRaises(ValueError):
            chunk_recording(rec, 0, 25)
        with self.assertRaises(ValueError):
            chunk_recording(rec, 30, 25)

    def test_chunks_tile_recordings(self):
        """
        Test tiling and duration limits on a synthetic corpus.
        """
        corpus = make_corpus(n_recordings=2, blocks=10, seed=5)
        for rec in corpus.recordings.values():
            chunks = chunk_recording(rec, 15, 25)
            self.assertEqual(chunks[0].window.start_cs, 0)
            self.assertEqual(chunks[-1].window.end_cs, rec.duration_cs)
            for prev, cur in zip(chunks, chunks[1:]):
                self.assertEqual(prev.window.end_cs, cur.window.start_cs,
                                 "Chunks must be contiguous.")
            for chunk in chunks:
                self.assertLessEqual(chunk.window.duration_cs, 2500)
            for chunk in chunks[:-1]:
                self.assertGreaterEqual(chunk.window.duration_cs, 1500)
            total = sum(len(c.segments) for c in chunks)
            self.assertEqual(total, len(rec.segments),
                             "Cuts inside silences must not split segments.")


if __name__ == "__main__":
    unittest.main()
