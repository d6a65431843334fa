import io
import os
import unittest

from diar_dialogue.dialogue_builder import (
    AUDIO_PLACEHOLDER,
    build_dialogue,
    concat_training_sequence,
    read_dialogues,
    write_dialogues
)
from diar_dialogue.exceptions import ParseError
from diar_dialogue.ingest_io import WordTiming
from diar_dialogue.perturbation import PerturbationConfig
from diar_dialogue.timeline import Chunk, DiarSegment, TimeInterval
from diar_dialogue.token_codec import PLAIN, WITH_TIMESTAMPS

GOLDEN_FILE = os.path.join(os.path.dirname(__file__), "golden",
                           "sample.dialogues.jsonl")


def cs_word(word, start_cs, end_cs):
    return WordTiming(word, TimeInterval(start_cs, end_cs))


def cs_seg(speaker, start_cs, end_cs):
    return DiarSegment(speaker, TimeInterval(start_cs, end_cs))


class TestDialogueBuilder(unittest.TestCase):
    """
    Unit test for building, writing and reading dialogues.

    This test validates:
    - Dialogues serialize to the documented JSONL layout.
    - Perturbation touches prompts only, never targets.
    - The reader enforces the dialogue invariants.
    """

    def setUp(self):
        """
        Set up the two chunks behind the golden dialogue file.
        """
        self.chunk_m1 = Chunk(
            "m1_0000", "m1", 0, TimeInterval(0, 500),
            (cs_seg("spkA", 50, 140), cs_seg("spkB", 160, 230))
        )
        self.words_m1 = [
            [cs_word("hi", 50, 80), cs_word("there", 90, 140)],
            [cs_word("hello", 160, 230)],
        ]
        self.chunk_m2 = Chunk(
            "m2_0000", "m2", 0, TimeInterval(0, 500),
            (cs_seg("spk7", 0, 80),)
        )
        self.words_m2 = [[cs_word("好", 0, 40), cs_word("的", 40, 80)]]
        with open(GOLDEN_FILE, "r", encoding="utf-8") as f:
            self.golden = f.read()

    def build_golden(self, pert_cfg=None):
        return [
            build_dialogue(self.chunk_m1, self.words_m1, WITH_TIMESTAMPS,
                           pert_cfg),
            build_dialogue(self.chunk_m2, self.words_m2, PLAIN, pert_cfg),
        ]

    def test_golden_dialogues(self):
        """
        Test that built dialogues match the golden JSONL byte for byte.
        """
        stream = io.StringIO()
        count = write_dialogues(self.build_golden(), stream)
        self.assertEqual(count, 2)
        self.assertEqual(stream.getvalue(), self.golden)

    def test_read_write_round_trip(self):
        """
        Test that reading and rewriting the golden file changes nothing.
        """
        dialogues = read_dialogues(self.golden, source_name=GOLDEN_FILE)
        self.assertEqual([d.chunk_id for d in dialogues],
                         ["m1_0000", "m2_0000"])
        self.assertEqual(dialogues[0].speaker_map.forward,
                         {"spkA": 0, "spkB": 1})
        stream = io.StringIO()
        write_dialogues(dialogues, stream)
        self.assertEqual(stream.getvalue(), self.golden)

    def test_turn_structure(self):
        """
        Test audio markers, turn order and training spans.
        """
        chunk = Chunk("m1_0001", "m1", 1, TimeInterval(500, 1500), (
            cs_seg("late", 0, 300),
            cs_seg("early", 0, 200),
            cs_seg("late", 400, 600),
        ))
        words = [["a"], ["b"], ["c"]]
        d = build_dialogue(chunk, words, PLAIN)

        self.assertEqual([t.segment.speaker for t in d.turns],
                         ["early", "late", "late"],
                         "Equal starts must follow local speaker order.")
        self.assertTrue(d.turns[0].prompt_text.startswith(AUDIO_PLACEHOLDER))
        for turn in d.turns[1:]:
            self.assertFalse(turn.has_audio)
            self.assertNotIn(AUDIO_PLACEHOLDER, turn.prompt_text)

        text, spans = concat_training_sequence(d)
        self.assertEqual(len(spans), len(d.turns))
        for turn, span in zip(d.turns, spans):
            self.assertEqual(text[span.begin_char:span.end_char],
                             turn.target_text)

    def test_perturbation_leaves_targets_untouched(self):
        """
        Test that perturbed builds keep the clean targets.
        """
        clean = self.build_golden()
        for seed in range(20):
            noisy = self.build_golden(PerturbationConfig(p=0.5, seed=seed))
            for a, b in zip(clean, noisy):
                self.assertEqual([t.target_text for t in a.turns],
                                 [t.target_text for t in b.turns])
                self.assertEqual(
                    [t.perturbation.original for t in b.turns],
                    [t.condition for t in a.turns],
                    "The record must keep the clean condition."
                )

    def test_build_errors(self):
        """
        Test the validation of build inputs.
        """
        with self.assertRaises(ValueError) as context:
            build_dialogue(self.chunk_m1, self.words_m1[:1], PLAIN)
        self.assertIn("spkB@1.60", str(context.exception))
        with self.assertRaises(ValueError):
            build_dialogue(Chunk("m1_0002", "m1", 2, TimeInterval(0, 100)),
                           [], PLAIN)
        with self.assertRaises(ValueError):
            build_dialogue(self.chunk_m1, self.words_m1, "verbose")

    def test_reader_errors(self):
        """
        Test that broken lines raise ParseError with their line number.
        """
        first, second = self.golden.splitlines()
        cases = [
            "{broken",
            second.replace('"has_audio": true', '"has_audio": false'),
            second.replace('"condition": {"spk": 0, "start_idx": 0',
                           '"condition": {"spk": 0, "start_idx": 1'),
            second.replace('"turns": [', '"turns": [] , "x": ['),
            second.replace('"chunk_id": "m2_0000", ', ""),
        ]
        for bad in cases:
            with self.assertRaises(ParseError) as context:
                read_dialogues(first + "\n" + bad + "\n",
                               source_name="bad.jsonl")
            self.assertEqual(context.exception.line, 2,
                             f"Wrong line reported for {bad[:60]}")


if __name__ == "__main__":
    unittest.main()
