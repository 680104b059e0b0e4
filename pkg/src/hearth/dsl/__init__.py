"""The abstract rule language: lexer, parser, validator, formatter."""

from .ast import (
    Activity, Between, Above, Below, Comparison, Diagnostic, Logical,
    NotifyAction, Presence, RuleAST, Scope, SetAction, KeepAction, Subject,
    TimeAtom,
)
from .tokens import LexError, Token, tokenize
from .parser import (
    MisplacedVariable, ParseError, UnknownIdentifier, parse_rule, parse_script,
)
from .formatter import format_rule
from .validate import validate_script

__all__ = [
    "Activity", "Between", "Above", "Below", "Comparison", "Diagnostic",
    "Logical", "NotifyAction", "Presence", "RuleAST", "Scope", "SetAction",
    "KeepAction", "Subject", "TimeAtom", "LexError", "Token", "tokenize",
    "MisplacedVariable", "ParseError", "UnknownIdentifier", "parse_rule",
    "parse_script", "format_rule", "validate_script",
]
