import unittest

import numpy as np

from diar_dialogue.ingest_io import WordTiming
from diar_dialogue.timeline import Chunk, DiarSegment, TimeInterval
from diar_dialogue.token_codec import (
    PLAIN,
    WITH_TIMESTAMPS,
    CodecConfig,
    SegmentCondition,
    SpecialToken,
    SpeakerMap,
    build_speaker_map,
    decode_response,
    discretize_time,
    encode_target,
    render_prompt,
    undiscretize_time
)
from diar_dialogue.words import join_words, split_words

ASCII_WORDS = ("alpha", "beta", "gamma", "delta", "epsilon", "zeta", "eta",
               "theta", "iota", "kappa")
CJK_CHARS = ("好", "的", "我", "们", "会", "议", "한", "국", "の", "は")


def timed(word, start, end):
    return WordTiming(word, TimeInterval.from_seconds(start, end))


class TestTokenCodec(unittest.TestCase):
    """
    Unit test for the special-token codec.

    This test validates:
    - Times map onto the grid with half-up ties and clamping.
    - Speaker maps number speakers by first appearance.
    - Targets encode and decode without loss on grid-aligned timings.
    - Malformed responses are repaired and counted instead of raising.
    """

    def setUp(self):
        """
        Set up the default grid.
        """
        self.cfg = CodecConfig()

    def test_discretize_ties_round_half_up(self):
        """
        Test that every half-step tie rounds up.
        """
        for k in range(1, 500, 2):
            self.assertEqual(
                discretize_time(k * 0.05, self.cfg),
                (k + 1) // 2,
                f"{k} * 0.05 s must map to index {(k + 1) // 2}."
            )

    def test_discretize_bounds(self):
        """
        Test clamping, negative input and the inverse map.
        """
        self.assertEqual(discretize_time(0.0, self.cfg), 0)
        self.assertEqual(discretize_time(99.0, self.cfg), 250)
        with self.assertRaises(ValueError):
            discretize_time(-0.1, self.cfg)
        self.assertEqual(undiscretize_time(14, self.cfg), 1.4)
        with self.assertRaises(ValueError):
            undiscretize_time(251, self.cfg)
        self.assertEqual(CodecConfig.for_max_chunk(25.0, 0.1).max_time_index,
                         250)
        self.assertEqual(CodecConfig.for_max_chunk(30.0, 0.2).max_time_index,
                         150)

    def test_speaker_map_first_appearance(self):
        """
        Test local speaker numbering and the bijection invariant.
        """
        chunk = Chunk("m1_0000", "m1", 0, TimeInterval(0, 2000), (
            DiarSegment("zed", TimeInterval(100, 300)),
            DiarSegment("amy", TimeInterval(500, 900)),
            DiarSegment("zed", TimeInterval(1000, 1200)),
            DiarSegment("bob", TimeInterval(500, 700)),
        ))
        speaker_map = build_speaker_map(chunk)
        self.assertEqual(speaker_map.forward, {"zed": 0, "amy": 1, "bob": 2},
                         "Equal first starts must be ordered by label.")
        for label, index in speaker_map.forward.items():
            self.assertEqual(speaker_map.reverse[index], label)

        with self.assertRaises(ValueError):
            build_speaker_map(chunk, CodecConfig(max_speakers=2))
        with self.assertRaises(ValueError):
            SpeakerMap(forward={"a": 0}, reverse={0: "b"})
        with self.assertRaises(ValueError):
            SpeakerMap(forward={"a": 1}, reverse={1: "a"})

    def test_special_tokens(self):
        """
        Test parsing and validating special tokens.
        """
        token = SpecialToken.parse("<|time_idx_12|>")
        self.assertEqual((token.kind, token.value), ("time_index", 12))
        self.assertEqual(token.surface, "<|time_idx_12|>")
        self.assertEqual(SpecialToken.parse("<|spk_idx_3|>").kind,
                         "speaker_index")
        self.assertEqual(SpecialToken.parse("<|end_of_spk|>").value,
                         "end_of_spk")
        with self.assertRaises(ValueError):
            SpecialToken.parse("<|bogus|>")
        with self.assertRaises(ValueError):
            SpecialToken.parse("plain text")
        with self.assertRaises(ValueError):
            SpecialToken("time_index", 251).validate(self.cfg)

    def test_render_prompt(self):
        """
        Test the prompt template.
        """
        prompt = render_prompt(SegmentCondition(0, 12, 48))
        self.assertEqual(
            prompt,
            "Please transcribe the speech content of speaker "
            "<|start_of_spk|><|spk_idx_0|><|end_of_spk|> within the time "
            "segment <|start_of_time|><|time_idx_12|><|time_idx_48|>"
            "<|end_of_time|> into text."
        )
        self.assertTrue(render_prompt(SegmentCondition(1, 0, 5), True)
                        .endswith("into text.<|with_timestamps|>"))

    def test_encode_targets(self):
        """
        Test plain and timestamped targets.
        """
        words = [timed("hi", 0.5, 0.8), timed("there", 0.9, 1.4)]
        self.assertEqual(
            encode_target(0, words, WITH_TIMESTAMPS, self.cfg),
            "<|start_of_spk|><|spk_idx_0|><|end_of_spk|>"
            "<|time_idx_5|>hi<|time_idx_9|>there<|time_idx_14|>"
        )
        self.assertEqual(
            encode_target(2, ["hi", "there"], PLAIN, self.cfg),
            "<|start_of_spk|><|spk_idx_2|><|end_of_spk|>hi there"
        )
        self.assertEqual(
            encode_target(1, [], WITH_TIMESTAMPS, self.cfg),
            "<|start_of_spk|><|spk_idx_1|><|end_of_spk|>",
            "An empty transcript yields only the speaker prefix."
        )
        with self.assertRaises(ValueError):
            encode_target(0, ["hi"], WITH_TIMESTAMPS, self.cfg)
        with self.assertRaises(ValueError):
            encode_target(0, list(reversed(words)), WITH_TIMESTAMPS, self.cfg)
        with self.assertRaises(ValueError):
            encode_target(0, words, "verbose", self.cfg)

    def random_word(self, rng):
        if rng.random() < 0.3:
            return CJK_CHARS[int(rng.integers(len(CJK_CHARS)))]
        return ASCII_WORDS[int(rng.integers(len(ASCII_WORDS)))]

    def test_timestamp_round_trip(self):
        """
        Test that grid-aligned contiguous words decode to themselves.
        """
        rng = np.random.default_rng(11)
        for _ in range(1000):
            n = int(rng.integers(1, 51))
            cursor = int(rng.integers(0, 10))
            words = []
            for _ in range(n):
                steps = int(rng.integers(1, 5))
                words.append(WordTiming(
                    self.random_word(rng),
                    TimeInterval(10 * cursor, 10 * (cursor + steps))))
                cursor += steps
            speaker = int(rng.integers(0, 4))
            target = encode_target(speaker, words, WITH_TIMESTAMPS, self.cfg)
            self.assertEqual(target.count("<|time_idx_"), n + 1)
            decoded = decode_response(target, SegmentCondition(0, 0, 0),
                                      self.cfg)
            self.assertEqual(decoded.speaker, speaker)
            self.assertEqual(decoded.word_timings, tuple(words),
                             f"Round trip failed for {target}")
            self.assertEqual(decoded.quality.dropped_tokens, 0)
            self.assertEqual(decoded.revised_times,
                             TimeInterval(words[0].interval.start_cs,
                                          words[-1].interval.end_cs))

    def test_plain_round_trip(self):
        """
        Test that plain targets of mixed ASCII and CJK words decode to
        themselves.
        """
        rng = np.random.default_rng(12)
        for _ in range(1000):
            words = [self.random_word(rng)
                     for _ in range(int(rng.integers(0, 51)))]
            speaker = int(rng.integers(0, 4))
            target = encode_target(speaker, words, PLAIN, self.cfg)
            self.assertNotIn("<|time_idx_", target)
            decoded = decode_response(target, SegmentCondition(0, 0, 0),
                                      self.cfg)
            self.assertEqual(decoded.speaker, speaker)
            self.assertEqual(decoded.words, tuple(words),
                             f"Round trip failed for {target}")
            self.assertIsNone(decoded.word_timings)
            self.assertEqual(decoded.quality.dropped_tokens, 0)

    def test_decode_plain_and_cjk(self):
        """
        Test plain decoding and per-character CJK words.
        """
        decoded = decode_response(
            "<|start_of_spk|><|spk_idx_1|><|end_of_spk|>hello world",
            SegmentCondition(0, 0, 10), self.cfg
        )
        self.assertEqual((decoded.speaker, decoded.words),
                         (1, ("hello", "world")))
        self.assertIsNone(decoded.word_timings)
        self.assertEqual(split_words("我们 meet 好的"),
                         ["我", "们", "meet", "好", "的"])
        self.assertEqual(join_words(["我", "们", "meet", "today"]),
                         "我们meet today")
        self.assertEqual(join_words(["", "hi", "", "好", "there"]),
                         "hi好there", "Empty words are skipped.")

    def test_decode_repairs_malformed_responses(self):
        """
        Test the fallbacks for missing speakers and stray tokens.
        """
        expected = SegmentCondition(2, 0, 30)
        decoded = decode_response("no speaker here", expected, self.cfg)
        self.assertEqual(decoded.speaker, 2)
        self.assertTrue(decoded.quality.speaker_fallback)

        decoded = decode_response(
            "<|spk_idx_0|><|time_idx_3|>a<|time_idx_7|>b<|end_of_time|>",
            expected, self.cfg
        )
        self.assertEqual(decoded.words, ("a",),
                         "A word without closing time token must be dropped.")
        self.assertEqual(decoded.word_timings, (timed("a", 0.3, 0.7),))
        self.assertEqual(decoded.quality.dropped_tokens, 2)

        decoded = decode_response(
            "<|spk_idx_0|><|time_idx_3|>a<|time_idx_999|><|time_idx_5|>",
            expected, self.cfg
        )
        self.assertEqual(decoded.word_timings, (timed("a", 0.3, 0.5),),
                         "Time tokens off the grid must be skipped.")
        self.assertEqual(decoded.quality.dropped_tokens, 1)

        decoded = decode_response(
            "<|spk_idx_0|><|time_idx_2|>two words<|time_idx_6|>",
            expected, self.cfg
        )
        self.assertEqual(decoded.word_timings,
                         (timed("two", 0.2, 0.4), timed("words", 0.4, 0.6)))
        self.assertEqual(decoded.quality.split_words, 1)

        decoded = decode_response("", expected, self.cfg,
                                  mode=WITH_TIMESTAMPS)
        self.assertEqual(decoded.words, ())
        self.assertIsNone(decoded.revised_times)


if __name__ == "__main__":
    unittest.main()
