"""Comment extraction and comment-to-entity association.

Adjacent full-line ``//`` comments merge into one run; block comments stand
alone.  Association is total: trailing comments bind to the innermost
entity on their line, other comments to the nearest entity starting after
them, and the file entity catches everything else.
"""

from __future__ import annotations

from ckt import ids
from ckt.config import DEFAULT_STOPWORDS, normalize_tokens
from ckt.model import Comment, Entity, Span


def extract_comments(
    text: str,
    path: str,
    stopwords: frozenset[str] = DEFAULT_STOPWORDS,
) -> list[Comment]:
    """Return every comment in the file with its span and normalized tokens."""
    path = ids.norm_path(path)
    raw = _scan(text)
    merged = _merge_line_runs(raw)
    out: list[Comment] = []
    for start, end, style, body, trailing, unterminated in merged:
        attrs: dict[str, str] = {}
        if trailing:
            attrs["trailing"] = "true"
        if unterminated:
            attrs["unterminated"] = "true"
        out.append(
            Comment(
                text=body,
                span=Span(path, start, end),
                style=style,
                tokens=normalize_tokens(body, stopwords),
                attrs=attrs,
            )
        )
    return out


def _scan(text: str) -> list[tuple[int, int, str, str, bool, bool]]:
    """(start, end, style, body, trailing, unterminated) per raw comment."""
    found: list[tuple[int, int, str, str, bool, bool]] = []
    i, line = 0, 1
    n = len(text)
    code_on_line = False
    while i < n:
        ch = text[i]
        if ch == "\n":
            line += 1
            code_on_line = False
            i += 1
            continue
        if ch in " \t\r\f\v":
            i += 1
            continue
        if text.startswith("//", i):
            j = text.find("\n", i)
            j = n if j == -1 else j
            found.append((line, line, "line", text[i + 2 : j].strip(), code_on_line, False))
            i = j
            continue
        if text.startswith("/*", i):
            end = text.find("*/", i + 2)
            trailing = code_on_line
            if end == -1:
                body = text[i + 2 :]
                end_line = line + body.count("\n")
                found.append((line, end_line, "block", _strip_gutter(body), trailing, True))
                i = n
            else:
                body = text[i + 2 : end]
                end_line = line + body.count("\n")
                found.append((line, end_line, "block", _strip_gutter(body), trailing, False))
                line = end_line
                i = end + 2
            continue
        if ch in "\"'":
            j = i + 1
            while j < n and text[j] != ch:
                if text[j] == "\\":
                    j += 1
                elif text[j] == "\n":
                    line += 1
                j += 1
            code_on_line = True
            i = j + 1
            continue
        code_on_line = True
        i += 1
    return found


def _strip_gutter(body: str) -> str:
    lines = [ln.strip() for ln in body.split("\n")]
    lines = [ln[1:].strip() if ln.startswith("*") else ln for ln in lines]
    return " ".join(ln for ln in lines if ln).strip()


def _merge_line_runs(raw):
    merged = []
    for item in raw:
        start, end, style, body, trailing, unterminated = item
        if (
            merged
            and style == "line"
            and not trailing
            and merged[-1][2] == "line"
            and not merged[-1][4]
            and merged[-1][1] == start - 1
        ):
            prev = merged[-1]
            merged[-1] = (prev[0], end, "line", f"{prev[3]} {body}".strip(), False, False)
        else:
            merged.append(item)
    return merged


def associate_comments(
    comments: list[Comment], entities: list[Entity]
) -> list[tuple[str, str]]:
    """Map each comment to exactly one entity id; the file entity is the
    universal fallback."""
    spanned = [e for e in entities if e.span is not None and e.kind != "file"]
    file_entity = next((e for e in entities if e.kind == "file"), None)
    pairs: list[tuple[str, str]] = []
    for comment in comments:
        target = None
        if comment.attrs.get("trailing") == "true":
            containing = [
                e for e in spanned
                if e.span.start <= comment.span.start <= e.span.end
            ]
            if containing:
                target = min(
                    containing,
                    key=lambda e: (e.span.end - e.span.start, -e.span.start, e.id),
                )
        if target is None:
            following = [e for e in spanned if e.span.start >= comment.span.end]
            if following:
                # nearest start; ties prefer the outermost (longest) span
                target = min(
                    following,
                    key=lambda e: (
                        e.span.start - comment.span.end,
                        -(e.span.end - e.span.start),
                        e.id,
                    ),
                )
        if target is not None:
            pairs.append((comment.id, target.id))
        elif file_entity is not None:
            pairs.append((comment.id, file_entity.id))
        else:
            pairs.append((comment.id, ids.file_id(comment.span.path)))
    return pairs
