import re
from typing import Sequence

# Han, kana, hangul and CJK punctuation are scored per character
CJK_PATTERN = re.compile(
    "[\u2e80-\u2fdf\u3000-\u303f\u3040-\u30ff\u3100-\u312f\u3190-\u31ff"
    "\u3400-\u4dbf\u4e00-\u9fff\uac00-\ud7af\uf900-\ufaff\uff00-\uffef"
    "\U00020000-\U0002fa1f]"
)


# Exported function definitions ------------------------------------------------


def is_cjk(char: str) -> bool:
    return bool(CJK_PATTERN.match(char))


def join_words(words: Sequence[str]) -> str:
    """
    Join words into text: a space between two words unless either side of
    the junction is a CJK character.
    """
    text = ""
    for word in words:
        if not word:
            continue
        if text and not is_cjk(text[-1]) and not is_cjk(word[0]):
            text += " "
        text += word
    return text


def split_words(text: str) -> list[str]:
    """
    Inverse of :func:`join_words`: whitespace-separated words, with every
    CJK character its own word.
    """
    words = []
    for piece in text.split():
        run = ""
        for char in piece:
            if is_cjk(char):
                if run:
                    words.append(run)
                    run = ""
                words.append(char)
            else:
                run += char
        if run:
            words.append(run)
    return words

