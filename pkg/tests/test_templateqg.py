import math
from collections import Counter

import pytest

from polyir.corpus import Document, compute_stats, tokenize
from polyir.errors import CorpusFormatError, NoCandidateError, NoTemplateError, UnsatisfiableSlotError
from polyir.pretraingen import TASK_TQG
from polyir.templateqg import (
    EntityLexicon,
    Template,
    build_template_bank,
    extract_template,
    find_mentions,
    gen_qa_pairs,
    generate_question,
    read_bank,
    select_template,
    write_bank,
)


@pytest.fixture
def lexicon():
    return EntityLexicon(
        {
            "malaria": "DISEASE",
            "yellow fever": "DISEASE",
            "aspirin": "DRUG",
            "ibuprofen": "DRUG",
            "fever": "SYMPTOM",
            "headache": "SYMPTOM",
        }
    )


class TestExtract:
    def test_single_substitution(self, lexicon):
        t = extract_template("What causes malaria?", lexicon)
        assert t.pattern == "What causes [DISEASE]?"
        assert t.slot_types == ("DISEASE",)

    def test_two_substitutions(self, lexicon):
        t = extract_template("Does aspirin treat fever?", lexicon)
        assert t.pattern == "Does [DRUG] treat [SYMPTOM]?"
        assert t.slot_types == ("DRUG", "SYMPTOM")

    def test_no_entity(self, lexicon):
        with pytest.raises(NoTemplateError):
            extract_template("What time is it?", lexicon)

    def test_longest_match_wins(self, lexicon):
        t = extract_template("Is yellow fever deadly?", lexicon)
        assert t.pattern == "Is [DISEASE] deadly?"

    def test_case_insensitive(self, lexicon):
        assert extract_template("Who discovered ASPIRIN?", lexicon).pattern == "Who discovered [DRUG]?"

    def test_empty_question(self, lexicon):
        with pytest.raises(ValueError):
            extract_template("  ", lexicon)

    def test_source_terms_are_question_terms(self, lexicon):
        t = extract_template("Does aspirin treat fever?", lexicon, "q7")
        assert t.source_question_id == "q7"
        assert Counter(t.source_terms) == Counter(tokenize("Does aspirin treat fever?"))

    @pytest.mark.parametrize(
        "question",
        ["What causes malaria?", "Does aspirin treat fever?", "Is ibuprofen or aspirin better for headache?", "Malaria"],
    )
    def test_round_trip_on_source_question(self, lexicon, question):
        t = extract_template(question, lexicon)
        assert generate_question(t, Document("p", "", question), lexicon).text == question


class TestGenerate:
    def test_single_fill(self, lexicon):
        t = extract_template("What causes malaria?", lexicon)
        q = generate_question(t, Document("p", "", "Yellow Fever spreads by mosquitoes."), lexicon)
        assert q.text == "What causes Yellow Fever?"
        assert q.fillers == ("Yellow Fever",)

    def test_two_same_type_slots(self, lexicon):
        t = Template("Is [DRUG] safer than [DRUG]?", ("DRUG", "DRUG"), "q1", ("safer", "than"))
        q = generate_question(t, Document("p", "", "Doctors compare aspirin with ibuprofen and aspirin."), lexicon)
        assert q.fillers == ("aspirin", "ibuprofen")
        assert q.text == "Is aspirin safer than ibuprofen?"

    def test_unsatisfiable(self, lexicon):
        t = extract_template("Does aspirin treat fever?", lexicon)
        with pytest.raises(UnsatisfiableSlotError, match="SYMPTOM"):
            generate_question(t, Document("p", "", "Aspirin is a drug."), lexicon)

    def test_not_enough_distinct_entities(self, lexicon):
        t = Template("Is [DRUG] safer than [DRUG]?", ("DRUG", "DRUG"), "q1", ())
        with pytest.raises(UnsatisfiableSlotError):
            generate_question(t, Document("p", "", "aspirin and aspirin"), lexicon)

    def test_fillers_verbatim_in_passage(self, lexicon):
        passage = Document("p", "", "HEADACHE and Malaria, then IBUPROFEN.")
        t = Template("[DRUG] for [SYMPTOM] in [DISEASE]", ("DRUG", "SYMPTOM", "DISEASE"), "q", ())
        q = generate_question(t, passage, lexicon)
        assert all(f in passage.body for f in q.fillers)
        assert "[" not in q.text

    def test_mentions_are_non_overlapping(self, lexicon):
        mentions = find_mentions("yellow fever fever yellow", lexicon)
        assert [m.surface for m in mentions] == ["yellow fever", "fever"]


def brute_force_select(passage, bank, stats, lexicon):
    n = stats.n_docs
    body_terms = tokenize(passage.body)
    types = Counter()
    for key in {m.key: m.etype for m in find_mentions(passage.body, lexicon)}.items():
        types[key[1]] += 1
    vocab = sorted(set(body_terms) | {t for tpl in bank for t in tpl.source_terms})

    def vec(terms):
        tf = Counter(terms)
        return [tf[t] * (math.log((n + 1) / (stats.df(t) + 1)) + 1) for t in vocab]

    p = vec(body_terms)
    scored = []
    for tpl in bank:
        if any(types[t] < c for t, c in Counter(tpl.slot_types).items()):
            continue
        v = vec(tpl.source_terms)
        dot = sum(a * b for a, b in zip(p, v))
        norm = math.sqrt(sum(a * a for a in p)) * math.sqrt(sum(b * b for b in v))
        scored.append((-(dot / norm if norm else 0.0), tpl.source_question_id))
    return min(scored)[1]


@pytest.fixture
def med_corpus():
    return [
        Document("p1", "Malaria", "Malaria is a disease spread by mosquitoes and causes fever."),
        Document("p2", "Aspirin", "Aspirin treats headache and fever in adults."),
        Document("p3", "Ibuprofen", "Ibuprofen and aspirin reduce pain."),
        Document("p4", "Weather", "Rain is expected tomorrow."),
    ]


@pytest.fixture
def bank(lexicon):
    questions = [
        ("q1", "What causes malaria?"),
        ("q2", "Does aspirin treat fever?"),
        ("q3", "Is aspirin safer than ibuprofen?"),
        ("q4", "What disease is spread by mosquitoes like malaria?"),
        ("q5", "Which symptom does headache come with?"),
    ]
    return build_template_bank(questions, lexicon)


class TestSelect:
    def test_singleton(self, lexicon, med_corpus):
        t = extract_template("What causes malaria?", lexicon)
        assert select_template(med_corpus[0], [t], compute_stats(med_corpus), lexicon) == t

    def test_shared_terms_win(self, lexicon):
        a = Template("[DRUG] alpha", ("DRUG",), "zz", ("alpha", "beta"))
        b = Template("[DRUG] gamma", ("DRUG",), "aa", ("gamma",))
        passage = Document("p", "", "alpha beta aspirin")
        stats = compute_stats([passage, Document("o", "", "gamma")])
        assert select_template(passage, [b, a], stats, lexicon) == a

    def test_matches_brute_force(self, lexicon, med_corpus, bank):
        assert len(bank) == 5
        stats = compute_stats(med_corpus)
        for passage in med_corpus[:3]:
            assert select_template(passage, bank, stats, lexicon).source_question_id == brute_force_select(
                passage, bank, stats, lexicon
            )

    def test_permutation_invariant(self, lexicon, med_corpus, bank, rng):
        stats = compute_stats(med_corpus)
        for passage in med_corpus[:3]:
            base = select_template(passage, bank, stats, lexicon)
            for _ in range(5):
                shuffled = [bank[i] for i in rng.permutation(len(bank))]
                assert select_template(passage, shuffled, stats, lexicon) == base

    def test_tie_goes_to_lowest_id(self, lexicon):
        a = Template("[DRUG]?", ("DRUG",), "q2", ("x",))
        b = Template("[DRUG]!", ("DRUG",), "q1", ("x",))
        passage = Document("p", "", "aspirin")
        assert select_template(passage, [a, b], compute_stats([passage]), lexicon) == b

    def test_no_candidate(self, lexicon, med_corpus, bank):
        with pytest.raises(NoCandidateError):
            select_template(med_corpus[3], bank, compute_stats(med_corpus), lexicon)

    def test_empty_bank(self, lexicon, med_corpus):
        with pytest.raises(ValueError):
            select_template(med_corpus[0], [], compute_stats(med_corpus), lexicon)


class TestGenQaPairs:
    def test_no_entities_no_pairs(self, lexicon, bank):
        corpus = [Document("a", "", "rain today"), Document("b", "", "sun tomorrow")]
        assert gen_qa_pairs(corpus, bank, lexicon, compute_stats(corpus)) == []

    def test_hand_walkthrough(self, lexicon):
        bank = build_template_bank(
            [("q1", "What causes malaria?"), ("q2", "Does aspirin treat fever?")], lexicon
        )
        corpus = [
            Document("d1", "", "Yellow fever causes jaundice."),
            Document("d2", "", "Ibuprofen is used to treat headache."),
            Document("d3", "", "Nothing relevant here."),
        ]
        pairs = gen_qa_pairs(corpus, bank, lexicon, compute_stats(corpus))
        # d1 has only a DISEASE, so q1 is the one satisfiable template;
        # d2 has DRUG and SYMPTOM but no DISEASE, so only q2 fits; d3 is skipped
        assert [(p.query, p.positive_doc_id, p.task) for p in pairs] == [
            ("What causes Yellow fever?", "d1", TASK_TQG),
            ("Does Ibuprofen treat headache?", "d2", TASK_TQG),
        ]

    def test_no_unfilled_slots(self, lexicon, med_corpus, bank):
        pairs = gen_qa_pairs(med_corpus, bank, lexicon, compute_stats(med_corpus))
        assert [p.positive_doc_id for p in pairs] == ["p1", "p2", "p3"]
        assert all("[" not in p.query for p in pairs)

    def test_requires_bank_and_lexicon(self, lexicon, med_corpus):
        with pytest.raises(ValueError):
            gen_qa_pairs(med_corpus, [], lexicon, compute_stats(med_corpus))


class TestFiles:
    def test_bank_round_trip(self, tmp_path, bank):
        path = tmp_path / "bank.jsonl"
        write_bank(path, bank)
        assert read_bank(path) == bank

    def test_bad_bank_record(self, tmp_path):
        path = tmp_path / "bank.jsonl"
        path.write_text('{"pattern": "x"}\n', encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            read_bank(path)

    def test_lexicon_file(self, tmp_path):
        path = tmp_path / "lex.tsv"
        path.write_text("malaria\tDISEASE\n\nYellow Fever\tDISEASE\n", encoding="utf-8")
        lex = EntityLexicon.from_file(path)
        assert len(lex) == 2
        assert [m.etype for m in find_mentions("yellow fever", lex)] == ["DISEASE"]

    def test_bad_lexicon_line(self, tmp_path):
        path = tmp_path / "lex.tsv"
        path.write_text("malaria DISEASE\n", encoding="utf-8")
        with pytest.raises(CorpusFormatError):
            EntityLexicon.from_file(path)

    def test_template_invariants(self):
        with pytest.raises(ValueError):
            Template("no slots", (), "q", ())
        with pytest.raises(ValueError):
            Template("[DRUG] and [DRUG]", ("DRUG",), "q", ())
