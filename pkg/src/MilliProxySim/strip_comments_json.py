"""Loader for JSON documents with `//` line comments and `/* */` block comments.

Configuration and sweep files are written by hand and commented, so they are not strict JSON.
Comments are blanked out before the text is handed to `json`; line breaks inside comments are kept
so that `JSONDecodeError` still reports the line and column of the original file.
"""

import re
import json
from typing import Any, TextIO


# A string literal (with escapes), a line comment or a block comment. Strings are matched first so
# that "http://host" is never mistaken for the start of a comment.
_TOKENS = re.compile(r'"(?:\\.|[^"\\])*"|//[^\r\n]*|/\*.*?\*/', re.DOTALL)


def _blank(match: re.Match[str]) -> str:
    token = match.group()
    if token.startswith('"'):
        return token
    # keep line breaks, replace everything else by spaces
    return re.sub(r'[^\r\n]', ' ', token)


def strip_comments(string: str) -> str:
    """Removes all comments from `string`. An unterminated block comment is left in place, so the
    JSON parser reports it as an error."""
    return _TOKENS.sub(_blank, string)


# A JSON text may be any JSON value, see https://stackoverflow.com/a/3833312/ ,
# thus a return type of Union[dict[str, object], list[object]] is too restrictive.
def loads(string: str, **kwargs: Any) -> object:
    return json.loads(strip_comments(string), **kwargs)


def load(file: TextIO, **kwargs: Any) -> object:
    return loads(file.read(), **kwargs)
