import pytest

from hearth.dsl import (
    Above, Below, Between, Comparison, KeepAction, LexError, Logical,
    MisplacedVariable, NotifyAction, ParseError, Presence, SetAction,
    UnknownIdentifier, format_rule, parse_rule, parse_script, tokenize,
    validate_script,
)
from hearth.dsl.ast import RuleAST, Scope, Subject, TimeAtom

# The published corpus: every rule string the system must accept verbatim,
# including typographic quotes, plus the diagnostics each one should carry.
CORPUS = [
    ("IF (Joe IN HOME AND SUMMER AND MORNING) "
     "THEN KEEP Joe ROOM_TEMPERATURE KEEP BETWEEN 21 23", set()),
    ("IF (Joe IN Home) THEN ‘SET Joe ROOM LIGHT ON’", set()),
    ("IF (NIGHT) THEN ‘SET EXTERNAL_DOORS CLOSE’", set()),
    ("IF (Joe IN Home AND Joe ACTIVITY IS MUSIC) "
     "THEN ‘SET Joe ROOM MUSIC ON’", set()),
    ("IF (CleaningPerson IN Bathroom) THEN SET LightSET IN Bathroom ON", set()),
    ("IF Anyone IS Sleeping THEN SET AllVolume Below 25",
     {"relational-set-rewrite"}),
    ("IF Anyone IN Home AND AllTenants NOT IN Home THEN WARN Joe", set()),
    ("IF Always THEN KEEP Home Temperature ABOVE 5", set()),
    ("IF AT 2 A.M, THEN SET LaundryVal ON", {"postfix-rewrite"}),
    ("IF (Joe IN HOME) THEN ‘KEEP Joe ROOM_Temperature BETWEEN 23 21’",
     {"band-normalized"}),
]


class TestTokenize:
    def test_night_rule_tokens(self):
        kinds = [(t.kind, t.text) for t in
                 tokenize("IF (NIGHT) THEN SET EXTERNAL_DOORS CLOSE")]
        assert kinds == [
            ("KEYWORD", "IF"), ("LPAREN", "("), ("IDENT", "NIGHT"),
            ("RPAREN", ")"), ("KEYWORD", "THEN"), ("KEYWORD", "SET"),
            ("IDENT", "EXTERNAL_DOORS"), ("KEYWORD", "CLOSE"), ("EOF", ""),
        ]

    def test_empty_input(self):
        tokens = tokenize("")
        assert len(tokens) == 1 and tokens[0].kind == "EOF"

    def test_clock_literal_after_if(self):
        tokens = tokenize("IF 2AM THEN")
        assert tokens[1].kind == "CLOCK" and tokens[1].text == "02:00"

    def test_dotted_clock_with_trailing_comma(self):
        tokens = tokenize("IF AT 2 A.M, THEN")
        clock = [t for t in tokens if t.kind == "CLOCK"]
        assert clock and clock[0].text == "02:00"

    def test_half_hour_clock(self):
        tokens = tokenize("AT 14:30")
        assert tokens[1].text == "14:30"

    def test_lex_error_carries_byte_offset(self):
        with pytest.raises(LexError) as err:
            tokenize("IF %")
        assert err.value.offset == 3

    def test_quoted_span_is_one_string_token(self):
        tokens = tokenize("THEN 'SET Joe ROOM LIGHT ON'")
        assert tokens[1].kind == "STRING"
        assert tokens[1].text == "SET Joe ROOM LIGHT ON"


class TestCorpus:
    @pytest.mark.parametrize("text,expected", CORPUS,
                             ids=[f"rule{i}" for i in range(len(CORPUS))])
    def test_rule_parses_with_predicted_diagnostics(self, text, expected,
                                                    registry, config):
        ast = parse_rule(text, registry, config)
        assert {w.code for w in ast.warnings} == expected

    def test_unknown_location_typo_is_not_corrected(self, registry, config):
        with pytest.raises(UnknownIdentifier) as err:
            parse_rule("IF TemperatureVAL IN Kitechen ABOVE 25 THEN",
                       registry, config)
        assert err.value.name == "Kitechen"


class TestParseShapes:
    def test_joe_temperature_rule_shape(self, registry, config):
        ast = parse_rule(CORPUS[0][0], registry, config)
        assert isinstance(ast.condition, Logical) and ast.condition.op == "AND"
        presence, summer, morning = ast.condition.children
        assert presence == Presence(Subject("resident", "Joe"), "Home")
        assert summer == TimeAtom(keyword="Summer")
        assert morning == TimeAtom(keyword="Morning")
        (action,) = ast.actions
        assert action == KeepAction("TemperatureKEEP",
                                    Scope.resident_room("Joe"), Between(21, 23))

    def test_reversed_band_normalized(self, registry, config):
        ast = parse_rule(CORPUS[9][0], registry, config)
        (action,) = ast.actions
        assert action.target == Between(21, 23)

    def test_warn_rule_shape(self, registry, config):
        ast = parse_rule(CORPUS[6][0], registry, config)
        anyone, not_all = ast.condition.children
        assert anyone == Presence(Subject("any"), "Home")
        assert not_all == Logical("NOT", (Presence(Subject("all"), "Home"),))
        assert ast.actions == (NotifyAction(Subject("resident", "Joe"), "WARN"),)

    def test_relational_set_becomes_keep(self, registry, config):
        ast = parse_rule(CORPUS[5][0], registry, config)
        (action,) = ast.actions
        assert action == KeepAction("VolumeKEEP", Scope.home(), Below(25))

    def test_laundry_val_rewrites_to_set(self, registry, config):
        ast = parse_rule(CORPUS[8][0], registry, config)
        (action,) = ast.actions
        assert action == SetAction("LaundrySET", Scope.home(), "ON")
        assert ast.condition == TimeAtom(clock="02:00")

    def test_controlled_variable_in_condition_rejected(self, registry, config):
        with pytest.raises(MisplacedVariable):
            parse_rule("IF TemperatureKEEP ABOVE 25 THEN SET Light IN Bathroom ON",
                       registry, config)

    def test_measured_variable_in_action_rejected(self, registry, config):
        with pytest.raises(MisplacedVariable):
            parse_rule("IF Always THEN KEEP Humidity ABOVE 10 AND SET TemperatureVAL ON",
                       registry, config)

    def test_set_value_outside_domain(self, registry, config):
        with pytest.raises(ParseError):
            parse_rule("IF Always THEN SET Light IN Bathroom DIM", registry, config)

    def test_parse_error_names_expectations(self, registry, config):
        with pytest.raises(ParseError) as err:
            parse_rule("IF Joe Home THEN SET Light IN Bathroom ON", registry, config)
        assert "IN" in err.value.expected

    def test_unknown_identifier(self, registry, config):
        with pytest.raises(UnknownIdentifier):
            parse_rule("IF Bogus IN Home THEN SET Light IN Bathroom ON",
                       registry, config)


class TestScriptsAndValidation:
    def test_parse_script_skips_comments(self, registry, config):
        text = "# heading\n\nIF Always THEN SET Light IN Kitchen ON  # trailing\n"
        rules = parse_script(text, registry, config)
        assert len(rules) == 1 and rules[0].id == "r1"

    def test_in_domain_keep_is_clean(self, registry, config):
        rules = parse_script("IF Always THEN KEEP Home Temperature BETWEEN 21 23",
                             registry, config)
        assert validate_script(rules, config) == []

    def test_out_of_domain_keep(self, registry, config):
        rules = parse_script("IF Always THEN KEEP Home Temperature BETWEEN 21 90",
                             registry, config)
        codes = [d.code for d in validate_script(rules, config)]
        assert "OutOfDomain" in codes

    def test_duplicate_rule_ids(self, registry, config):
        a = parse_rule("IF Always THEN SET Light IN Kitchen ON", registry, config,
                       rule_id="r1")
        b = parse_rule("IF Night THEN SET Light IN Kitchen OFF", registry, config,
                       rule_id="r1")
        codes = [d.code for d in validate_script([a, b], config)]
        assert "DuplicateRuleId" in codes


class TestFormat:
    def test_normalized_band_order(self, registry, config):
        ast = parse_rule("IF Always THEN KEEP Home Temperature BETWEEN 23 21",
                         registry, config)
        assert "BETWEEN 21 23" in format_rule(ast, config)

    def test_warn_form(self, registry, config):
        ast = parse_rule("IF Anyone IN Home THEN WARN Joe", registry, config)
        assert format_rule(ast, config).endswith("THEN WARN Joe")

    def test_flat_and_chain(self, registry, config):
        ast = parse_rule("IF Night AND Weekend AND Joe IN Home "
                         "THEN SET Light IN Kitchen ON", registry, config)
        text = format_rule(ast, config)
        assert text.count("(") == 1  # only the outer condition group
