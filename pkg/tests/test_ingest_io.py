import io
import logging
import os
import unittest

from diar_dialogue.exceptions import ParseError
from diar_dialogue.ingest_io import (
    SegLstEntry,
    WordTiming,
    read_rttm,
    read_seglst,
    read_word_transcript,
    write_rttm,
    write_seglst,
    write_word_transcript
)
from diar_dialogue.timeline import TimeInterval

GOLDEN_DIR = os.path.join(os.path.dirname(__file__), "golden")


def read_golden(name):
    with open(os.path.join(GOLDEN_DIR, name), "r", encoding="utf-8") as f:
        return f.read()


class TestIngestIO(unittest.TestCase):
    """
    Unit test for the RTTM, CTM and SegLST readers and writers.

    This test validates:
    - Normalized files survive a read/write cycle byte for byte.
    - Comments and foreign record types are skipped.
    - Malformed records raise a ParseError naming the source and line.
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

    def test_golden_rttm(self):
        """
        Test that the golden RTTM is reproduced exactly.
        """
        text = read_golden("sample.rttm")
        recordings = read_rttm(text)
        self.assertEqual(sorted(recordings), ["m1", "m2"])
        self.assertEqual(recordings["m1"].duration_cs, 525,
                         "Duration must default to the latest segment end.")
        self.assertEqual(write_rttm(recordings), text)

    def test_golden_ctm(self):
        """
        Test that the golden CTM is reproduced exactly.
        """
        text = read_golden("sample.ctm")
        words = read_word_transcript(text)
        self.assertEqual(
            [w.word for w in words[("m1", "spkA")]], ["hi", "there"]
        )
        self.assertEqual(write_word_transcript(words), text)

    def test_golden_seglst(self):
        """
        Test that the golden SegLST is reproduced exactly.
        """
        text = read_golden("sample.seglst.json")
        entries = read_seglst(text)
        self.assertEqual(len(entries), 3)
        self.assertIsNone(entries[1].word_timings)
        self.assertEqual(entries[2].words, "好的")
        self.assertEqual(write_seglst(entries), text)

    def test_rttm_skips_comments_and_other_records(self):
        """
        Test that only SPEAKER lines are read.
        """
        text = (
            ";; a comment\n"
            "\n"
            "SPKR-INFO m1 1 <NA> <NA> <NA> unknown spkA <NA> <NA>\n"
            "SPEAKER m1 2 1.005 0.5 <NA> <NA> spkA <NA> <NA>\n"
        )
        recordings = read_rttm(text, durations={"m1": 10.0, "m2": 3.0})
        rec = recordings["m1"]
        self.assertEqual(len(rec.segments), 1)
        self.assertEqual(rec.segments[0].interval, TimeInterval(101, 151),
                         "Times must round half up to centiseconds.")
        self.assertEqual(rec.duration_cs, 1000)
        self.assertEqual(recordings["m2"].segments, (),
                         "Durations may declare recordings without speech.")

    def test_rttm_errors(self):
        """
        Test that malformed SPEAKER lines raise ParseError.
        """
        cases = [
            "SPEAKER m1 1 0.5 1.0\n",
            "SPEAKER m1 1 abc 1.0 <NA> <NA> spkA <NA> <NA>\n",
            "SPEAKER m1 1 0.5 -1.0 <NA> <NA> spkA <NA> <NA>\n",
        ]
        for text in cases:
            with self.assertRaises(ParseError) as context:
                read_rttm("\n" + text, source_name="bad.rttm")
            self.assertEqual(context.exception.line, 2)
            self.assertIn("bad.rttm:2", str(context.exception))

    def test_ctm_without_speaker_uses_channel(self):
        """
        Test the channel fallback and the overlap warning.
        """
        text = (
            "m1 A 0.00 0.50 hello\n"
            "m1 A 0.40 0.30 there\n"
        )
        words = read_word_transcript(text)
        self.assertEqual(list(words), [("m1", "A")])
        self.assertIn("1 overlapping words", self.log_stream.getvalue())
        with self.assertRaises(ParseError):
            read_word_transcript("m1 A 0.00 0.50\n")

    def test_seglst_errors(self):
        """
        Test that invalid SegLST input raises ParseError with the entry
        index.
        """
        with self.assertRaises(ParseError):
            read_seglst("{not json")
        with self.assertRaises(ParseError):
            read_seglst('{"session_id": "m1"}')
        with self.assertRaises(ParseError) as context:
            read_seglst(
                '[{"session_id": "m1", "speaker": "A", "start_time": 0,'
                ' "end_time": 1, "words": "a"},'
                ' {"session_id": "m1", "speaker": "A", "start_time": 2,'
                ' "end_time": 1, "words": "b"}]'
            )
        self.assertEqual(context.exception.line, 1)
        with self.assertRaises(ParseError):
            read_seglst(
                '[{"session_id": "m1", "speaker": "A", "start_time": 0,'
                ' "end_time": 1, "words": "a b",'
                ' "word_timings": [["a", 0, 0.5]]}]'
            )
        self.assertEqual(read_seglst(""), [])

    def test_seglst_writer_orders_entries(self):
        """
        Test that entries are written by session, start and speaker.
        """
        entries = [
            SegLstEntry("m2", "A", TimeInterval(0, 100), "x"),
            SegLstEntry("m1", "B", TimeInterval(50, 100), "y"),
            SegLstEntry("m1", "A", TimeInterval(50, 90), "z"),
        ]
        written = read_seglst(write_seglst(entries))
        self.assertEqual([(e.session_id, e.speaker) for e in written],
                         [("m1", "A"), ("m1", "B"), ("m2", "A")])

    def test_word_timing_validation(self):
        """
        Test that words may not be empty or contain whitespace.
        """
        with self.assertRaises(ValueError):
            WordTiming("", TimeInterval(0, 10))
        with self.assertRaises(ValueError):
            WordTiming("two words", TimeInterval(0, 10))

    def test_word_timings_follow_word_boundaries(self):
        """
        Test that word timings must split the text at its own word
        boundaries.
        """
        a = WordTiming("a", TimeInterval(0, 10))
        bc = WordTiming("bc", TimeInterval(10, 20))
        with self.assertRaises(ValueError):
            SegLstEntry("m1", "A", TimeInterval(0, 20), "ab c", (a, bc))
        entry = SegLstEntry("m1", "A", TimeInterval(0, 20), "a  bc", (a, bc))
        self.assertEqual(len(entry.word_timings), 2)

        hao = WordTiming("好", TimeInterval(0, 10))
        de = WordTiming("的", TimeInterval(10, 20))
        entry = SegLstEntry("m1", "A", TimeInterval(0, 20), "好的", (hao, de))
        self.assertEqual(entry.words, "好的",
                         "CJK characters may be timed one by one.")


if __name__ == "__main__":
    unittest.main()
