"""Flat ``key=value`` config files: one field per line, ``#`` comments."""

from pathlib import Path

from .errors import ValidationError

TRUE_WORDS = {"1", "true", "yes", "on"}
FALSE_WORDS = {"0", "false", "no", "off"}


def parse_kv(text):
    """Return the ``(key, value)`` pairs of *text* in file order.

    Keys may repeat (e.g. several ``bind=`` lines); callers decide whether
    that is legal.
    """
    pairs = []
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValidationError(f"line {lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ValidationError(f"line {lineno}: empty key")
        pairs.append((key, value.strip()))
    return pairs


def load_kv(path):
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ValidationError(f"cannot read config file {str(path)!r}: {exc.strerror}") from exc
    return parse_kv(text)


def as_int(key, value):
    try:
        return int(value)
    except ValueError:
        raise ValidationError(f"{key}: expected an integer, got {value!r}") from None


def as_float(key, value):
    try:
        return float(value)
    except ValueError:
        raise ValidationError(f"{key}: expected a number, got {value!r}") from None


def as_bool(key, value):
    word = value.strip().lower()
    if word in TRUE_WORDS:
        return True
    if word in FALSE_WORDS:
        return False
    raise ValidationError(f"{key}: expected a boolean, got {value!r}")
