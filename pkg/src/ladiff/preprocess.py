"""Rule-based rewriting of social-media posts into normalized text with special tokens.

The pipeline runs a fixed sequence of stages::

    replace_emojis -> space_hashtags -> replace_char_reps -> replace_word_reps
        -> mark_allcaps -> mark_capitalized -> normalize

The two case stages are skipped for Hindi (Devanagari has no letter case).
Every stage is a pure function of its input text and the config.
"""
from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

LANGUAGES = ("en", "hi")

_ENTITIES = {"amp": "&", "lt": "<", "gt": ">", "quot": '"', "#39": "'"}
_ENTITY_RE = re.compile(r"&(amp|lt|gt|quot|#39);", re.IGNORECASE)
_WORD_RE = re.compile(r"\S+")
_SENTENCE_END = ".!?"


class PreprocessConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# emoji maps


@dataclass(frozen=True)
class EmojiMap:
    """Emoji sequence -> replacement words, matched longest-first."""

    language: str
    entries: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise PreprocessConfigError(f"unknown emoji map language {self.language!r}")
        for key, words in self.entries.items():
            if not key:
                raise PreprocessConfigError("emoji map has an empty key")
            if any(ch in words for ch in "#{}"):
                raise PreprocessConfigError(f"replacement for {key!r} contains '#', '{{' or '}}'")
        object.__setattr__(self, "_max_len", max((len(k) for k in self.entries), default=0))
        object.__setattr__(self, "_first_chars", frozenset(k[0] for k in self.entries))

    @classmethod
    def from_lines(cls, lines, language):
        entries = {}
        for lineno, raw in enumerate(lines, 1):
            line = raw.rstrip("\r\n")
            if not line.strip() or line.startswith("#"):
                continue
            if "\t" not in line:
                raise PreprocessConfigError(f"emoji map line {lineno}: expected <emoji>TAB<words>")
            key, words = line.split("\t", 1)
            if key in entries:
                raise PreprocessConfigError(f"emoji map line {lineno}: duplicate key {key!r}")
            entries[key] = " ".join(words.split())
        return cls(language, entries)

    @classmethod
    def load(cls, path, language):
        with open(path, encoding="utf-8") as fh:
            return cls.from_lines(fh, language)

    @classmethod
    def builtin(cls, language):
        text = resources.files("ladiff").joinpath(f"data/emoji_{language}.tsv").read_text("utf-8")
        return cls.from_lines(text.splitlines(), language)


def _resolve_emoji_map(spec, language):
    if spec in (None, "", "builtin"):
        return EmojiMap.builtin(language)
    return EmojiMap.load(spec, language)


# ---------------------------------------------------------------------------
# config


@dataclass(frozen=True)
class PreprocessConfig:
    language: str = "en"
    rep_token: str = "tk_rep"
    wrep_token: str = "tk_wrep"
    up_token: str = "tk_up"
    maj_token: str = "tk_maj"
    min_char_run: int = 4
    min_word_run: int = 3
    enable_case_tokens: bool = True
    emoji_map: EmojiMap | None = None

    def __post_init__(self):
        if self.language not in LANGUAGES:
            raise PreprocessConfigError(f"language must be one of {LANGUAGES}, got {self.language!r}")
        tokens = self.special_tokens
        for tok in tokens:
            # word characters only, so punctuation spacing can never split a token
            if not tok or not re.fullmatch(r"[a-z0-9_]+", tok):
                raise PreprocessConfigError(f"invalid special token surface {tok!r}")
        if len(set(tokens)) != len(tokens):
            raise PreprocessConfigError("special token surfaces must be pairwise distinct")
        if self.min_char_run < 2 or self.min_word_run < 2:
            raise PreprocessConfigError("min_char_run and min_word_run must be >= 2")
        if self.language == "hi":
            object.__setattr__(self, "enable_case_tokens", False)
        if self.emoji_map is None:
            object.__setattr__(self, "emoji_map", EmojiMap.builtin(self.language))
        elif self.emoji_map.language != self.language:
            raise PreprocessConfigError(
                f"emoji map language {self.emoji_map.language!r} != pipeline language {self.language!r}"
            )

    @property
    def special_tokens(self):
        return (self.rep_token, self.wrep_token, self.up_token, self.maj_token)


_INT_KEYS = {"min_char_run", "min_word_run"}
_BOOL_KEYS = {"enable_case_tokens"}
CONFIG_KEYS = tuple(f.name for f in fields(PreprocessConfig))


def parse_bool(value):
    v = str(value).strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise PreprocessConfigError(f"not a boolean: {value!r}")


def read_kv_file(path):
    """Parse a ``key = value`` file; '#' starts a comment line."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise PreprocessConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, value = line.split("=", 1)
            key = key.strip()
            if key in out:
                raise PreprocessConfigError(f"{path}:{lineno}: duplicate key {key!r}")
            out[key] = value.strip()
    return out


def config_from_mapping(values, base_dir=None):
    """Build a PreprocessConfig from string values (unknown keys are rejected)."""
    unknown = set(values) - set(CONFIG_KEYS)
    if unknown:
        raise PreprocessConfigError(f"unknown preprocess config keys: {', '.join(sorted(unknown))}")
    kwargs = {}
    for key, value in values.items():
        if key in _INT_KEYS:
            try:
                kwargs[key] = int(value)
            except ValueError:
                raise PreprocessConfigError(f"{key} must be an integer, got {value!r}") from None
        elif key in _BOOL_KEYS:
            kwargs[key] = parse_bool(value)
        elif key != "emoji_map":
            kwargs[key] = str(value)
    language = kwargs.get("language", "en")
    map_spec = values.get("emoji_map", "builtin")
    if map_spec not in ("", "builtin") and base_dir is not None and not Path(map_spec).is_absolute():
        map_spec = str(Path(base_dir) / map_spec)
    kwargs["emoji_map"] = _resolve_emoji_map(map_spec, language)
    return PreprocessConfig(**kwargs)


def load_config(path, **overrides):
    values = read_kv_file(path)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return config_from_mapping(values, base_dir=Path(path).parent)


def dump_config(cfg, emoji_map_ref="builtin"):
    lines = []
    for name in CONFIG_KEYS:
        if name == "emoji_map":
            lines.append(f"emoji_map = {emoji_map_ref}")
        else:
            value = getattr(cfg, name)
            lines.append(f"{name} = {str(value).lower() if isinstance(value, bool) else value}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# character classes shared by punctuation spacing and word-run detection


def _char_classes(text):
    """'w' word char, 'p' special char, ' ' whitespace; combining marks join their base."""
    classes = []
    prev = " "
    for ch in text:
        if ch.isspace():
            cls = " "
        elif ch.isalnum() or ch == "_":
            cls = "w"
        elif unicodedata.category(ch)[0] == "M":
            cls = prev if prev != " " else "w"
        else:
            cls = "p"
        classes.append(cls)
        prev = cls
    return classes


def _pieces(word):
    """Split a whitespace-free word at word/special boundaries, as normalize would."""
    if not word:
        return []
    classes = _char_classes(word)
    out, start = [], 0
    for i in range(1, len(word)):
        if classes[i] != classes[i - 1]:
            out.append(word[start:i])
            start = i
    out.append(word[start:])
    return out


def decode_entities(text):
    # repeat so that doubly-escaped input ("&amp;amp;") ends fully decoded
    while True:
        new = _ENTITY_RE.sub(lambda m: _ENTITIES[m.group(1).lower()], text)
        if new == text:
            return text
        text = new


# ---------------------------------------------------------------------------
# stages


def replace_emojis(text, emoji_map):
    entries = emoji_map.entries
    if not entries:
        return text
    first, max_len = emoji_map._first_chars, emoji_map._max_len
    out = []
    i, n = 0, len(text)
    while i < n:
        if text[i] in first:
            for length in range(min(max_len, n - i), 0, -1):
                words = entries.get(text[i:i + length])
                if words is not None:
                    out.append(f" {words} ")
                    i += length
                    break
            else:
                out.append(text[i])
                i += 1
        else:
            out.append(text[i])
            i += 1
    return "".join(out)


def space_hashtags(text):
    return re.sub(r"#(?=\S)", "# ", text)


def replace_char_reps(text, cfg):
    """Replace runs of >= min_char_run identical characters by ``rep_token n c``.

    HTML entities are decoded first and characters are compared case-insensitively,
    so that neither later decoding nor lowercasing can create a fresh run.
    """
    text = decode_entities(text)
    out = []
    i, n = 0, len(text)
    while i < n:
        ch = text[i]
        key = ch.lower()
        j = i + 1
        while j < n and text[j].lower() == key:
            j += 1
        run = j - i
        if run >= cfg.min_char_run and not ch.isspace():
            out.append(f" {cfg.rep_token} {run} {ch} ")
        else:
            out.append(text[i:j])
        i = j
    return "".join(out)


def replace_word_reps(text, cfg):
    """Replace runs of >= min_word_run identical words by ``wrep_token n w``.

    Words are compared after the same punctuation splitting and lowercasing that
    normalize applies later ("x! ! !" holds a run of three "!"); words that take
    part in no run are left byte-for-byte as they were.
    """
    spans = [(m.start(), m.end()) for m in _WORD_RE.finditer(text)]
    pieces, owner = [], []
    for wi, (s, e) in enumerate(spans):
        for piece in _pieces(text[s:e]):
            pieces.append(piece)
            owner.append(wi)
    n = len(pieces)
    run_len = [0] * n  # length of the run starting at this piece, 0 when covered by a run
    covered = [False] * n
    i = 0
    while i < n:
        key = pieces[i].lower()
        j = i + 1
        while j < n and pieces[j].lower() == key:
            j += 1
        if j - i >= cfg.min_word_run:
            run_len[i] = j - i
            for k in range(i, j):
                covered[k] = True
        i = j
    if not any(covered):
        return text

    by_word = [[] for _ in spans]
    for p, wi in enumerate(owner):
        by_word[wi].append(p)
    out = []
    cursor = 0
    for wi, (s, e) in enumerate(spans):
        idx = by_word[wi]
        if not any(covered[p] for p in idx):
            out.append(text[cursor:e])
        else:
            rendered = []
            for p in idx:
                if run_len[p]:
                    rendered.append(f" {cfg.wrep_token} {run_len[p]} {pieces[p]} ")
                elif not covered[p]:
                    rendered.append(pieces[p])
            if rendered:
                out.append(text[cursor:s] + " ".join(rendered))
        cursor = e
    out.append(text[cursor:])
    return "".join(out)


def _is_allcaps(word):
    letters = [c for c in word if c.isalpha()]
    return bool(letters) and all(c.isupper() for c in letters), len(letters)


def _rewrite_words(text, fn):
    """Apply fn(index, words) -> replacement to every whitespace-delimited word."""
    matches = list(_WORD_RE.finditer(text))
    words = [m.group() for m in matches]
    out, cursor = [], 0
    for i, m in enumerate(matches):
        out.append(text[cursor:m.start()])
        out.append(fn(i, words))
        cursor = m.end()
    out.append(text[cursor:])
    return "".join(out)


def _after_hashtag(i, words):
    return i > 0 and words[i - 1].endswith("#")


def mark_allcaps(text, cfg):
    """Prefix all-caps words with up_token and lowercase them.

    A single capital letter ("I", "A") is only tagged when it sits next to a
    multi-letter all-caps word, i.e. inside a shouted span. Hashtag bodies are
    left alone.
    """
    if not cfg.enable_case_tokens:
        return text
    info = [_is_allcaps(m.group()) for m in _WORD_RE.finditer(text)]

    def shouted(i):
        return 0 <= i < len(info) and info[i][0] and info[i][1] >= 2

    def fn(i, words):
        caps, n_letters = info[i]
        if not caps or _after_hashtag(i, words):
            return words[i]
        if n_letters >= 2 or shouted(i - 1) or shouted(i + 1):
            return f"{cfg.up_token} {words[i].lower()}"
        return words[i]

    return _rewrite_words(text, fn)


def mark_capitalized(text, cfg):
    """Prefix capitalized, non-sentence-initial words with maj_token.

    Sentence-initial words (first word, or after a word ending in . ! ?) only
    get their first letter lowercased.
    """
    if not cfg.enable_case_tokens:
        return text

    def fn(i, words):
        word = words[i]
        if not word[0].isupper() or _after_hashtag(i, words):
            return word
        lowered = word[0].lower() + word[1:]
        if i == 0 or words[i - 1][-1] in _SENTENCE_END:
            return lowered
        if _is_allcaps(word)[0]:
            return word
        return f"{cfg.maj_token} {lowered}"

    return _rewrite_words(text, fn)


def normalize(text):
    text = decode_entities(text)
    classes = _char_classes(text)
    out = []
    for i, ch in enumerate(text):
        if i and {classes[i - 1], classes[i]} == {"w", "p"}:
            out.append(" ")
        out.append(ch)
    return " ".join("".join(out).lower().split())


# ---------------------------------------------------------------------------
# pipeline


@dataclass(frozen=True)
class RewriteTrace:
    input: str
    output: str
    stage_outputs: tuple


def stage_names(cfg):
    names = ["replace_emojis", "space_hashtags", "replace_char_reps", "replace_word_reps"]
    if cfg.enable_case_tokens:
        names += ["mark_allcaps", "mark_capitalized"]
    names.append("normalize")
    return names


def _stage_fn(name, cfg):
    return {
        "replace_emojis": lambda t: replace_emojis(t, cfg.emoji_map),
        "space_hashtags": space_hashtags,
        "replace_char_reps": lambda t: replace_char_reps(t, cfg),
        "replace_word_reps": lambda t: replace_word_reps(t, cfg),
        "mark_allcaps": lambda t: mark_allcaps(t, cfg),
        "mark_capitalized": lambda t: mark_capitalized(t, cfg),
        "normalize": normalize,
    }[name]


def preprocess(text, cfg=None):
    """Run the full pipeline; returns ``(output, RewriteTrace)``."""
    if cfg is None:
        cfg = PreprocessConfig()
    current = text
    stages = []
    for name in stage_names(cfg):
        current = _stage_fn(name, cfg)(current)
        stages.append((name, current))
    return current, RewriteTrace(text, current, tuple(stages))


def preprocess_text(text, cfg=None):
    return preprocess(text, cfg)[0]
