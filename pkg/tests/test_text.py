from campaignkit.text import fold, match_keyword, mentions_in_text, tokenize


def test_fold_accents_and_case():
    assert fold("Corrupción") == "corrupcion"
    assert fold("IMPUNIDAD") == "impunidad"


def test_match_keyword_folded_substring():
    assert match_keyword("Ya basta de Corrupción aquí", ["corrupcion"]) == "corrupcion"
    assert match_keyword("la impunidad reina", ["corrupcion", "impunidad"]) == "impunidad"
    assert match_keyword("nothing to see", ["corrupcion"]) is None


def test_match_keyword_accented_keyword():
    assert match_keyword("hablando de corrupcion", ["corrupción"]) == "corrupción"


def test_tokenize_keeps_sigils_strips_edge_punctuation():
    assert tokenize("Vamos! #JusticiaYa, dice @ana_p.") == ["vamos", "#justiciaya", "dice", "@ana_p"]


def test_tokenize_case_folds():
    assert tokenize("HOLA Hola hola") == ["hola"] * 3


def test_tokenize_drops_bare_punctuation():
    assert tokenize("- # @ !!") == []


def test_mentions_in_text():
    text = "@ana @beto_c hola @carla! y no-esto"
    assert mentions_in_text(text) == ["ana", "beto_c", "carla"]
