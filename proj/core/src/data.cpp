#include "mmm/data.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace mmm {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Vocabulary
// ---------------------------------------------------------------------------

Vocabulary::Vocabulary() {
    add("[PAD]");
    add("[UNK]");
    add("[CLS]");
    add("[SEP]");
}

Vocabulary::Vocabulary(const std::vector<std::string>& tokens) : Vocabulary() {
    for (const auto& t : tokens) add(t);
}

void Vocabulary::add(const std::string& token) {
    if (token_to_id_.count(token)) throw UsageError("vocabulary: duplicate token '" + token + "'");
    token_to_id_[token] = static_cast<int>(id_to_token_.size());
    id_to_token_.push_back(token);
}

int Vocabulary::encode(const std::string& token) const {
    auto it = token_to_id_.find(token);
    return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocabulary::decode(int id) const {
    if (id < 0 || id >= size()) throw UsageError("vocabulary: id out of range");
    return id_to_token_[static_cast<size_t>(id)];
}

bool Vocabulary::contains(const std::string& token) const { return token_to_id_.count(token) > 0; }

std::vector<std::string> Vocabulary::tokens() const {
    return std::vector<std::string>(id_to_token_.begin() + 4, id_to_token_.end());
}

// ---------------------------------------------------------------------------
// text preprocessing
// ---------------------------------------------------------------------------

std::string speaker_normalize(const std::string& utterance) {
    if (utterance.size() >= 2 && utterance[1] == ':') {
        const char c = static_cast<char>(std::tolower(static_cast<unsigned char>(utterance[0])));
        if (c == 'w' || c == 'f') return "woman" + utterance.substr(1);
        if (c == 'm') return "man" + utterance.substr(1);
    }
    return utterance;
}

std::vector<std::string> tokenize(const std::string& text) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&] {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char raw : text) {
        const unsigned char uc = static_cast<unsigned char>(raw);
        if (std::isspace(uc)) {
            flush();
        } else if (std::ispunct(uc)) {
            flush();
            out.emplace_back(1, raw);
        } else {
            cur.push_back(static_cast<char>(std::tolower(uc)));
        }
    }
    flush();
    return out;
}

Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_freq) {
    if (corpus.empty()) throw UsageError("build_vocab: empty corpus");
    std::map<std::string, long> counts;
    for (const auto& text : corpus)
        for (const auto& tok : tokenize(text)) counts[tok] += 1;
    std::vector<std::pair<std::string, long>> kept;
    for (const auto& [tok, cnt] : counts)
        if (cnt >= min_freq) kept.emplace_back(tok, cnt);
    std::sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    std::vector<std::string> tokens;
    tokens.reserve(kept.size());
    for (const auto& [tok, cnt] : kept) tokens.push_back(tok);
    return Vocabulary(tokens);
}

// ---------------------------------------------------------------------------
// packing
// ---------------------------------------------------------------------------

namespace {

EncodedSequence pack_impl(const std::vector<std::string>& first,
                          const std::vector<std::string>& second,
                          const std::vector<std::string>& third, const Vocabulary& vocab,
                          int max_len) {
    // layout: CLS first SEP second third SEP, PAD to max_len
    const int n_special = 3;
    int f = static_cast<int>(first.size());
    int s = static_cast<int>(second.size());
    int t = static_cast<int>(third.size());
    if (s + t > max_len - n_special)
        throw UsageError("pack_sequence: question+option exceed max_len budget");
    // passage tail goes first; option then question tails are kept for
    // completeness but cannot trigger given the check above
    int over = n_special + f + s + t - max_len;
    if (over > 0) {
        int cut = std::min(over, f);
        f -= cut;
        over -= cut;
    }
    if (over > 0) {
        int cut = std::min(over, t);
        t -= cut;
        over -= cut;
    }
    if (over > 0) s -= over;

    EncodedSequence seq;
    seq.ids.reserve(max_len);
    seq.roles.reserve(max_len);
    auto push = [&](int id, Role role) {
        seq.ids.push_back(id);
        seq.roles.push_back(role);
        seq.attention_mask.push_back(role == Role::Pad ? 0 : 1);
    };
    push(Vocabulary::kCls, Role::Special);
    for (int i = 0; i < f; ++i) push(vocab.encode(first[i]), Role::Passage);
    push(Vocabulary::kSep, Role::Special);
    for (int i = 0; i < s; ++i) push(vocab.encode(second[i]), Role::QO);
    for (int i = 0; i < t; ++i) push(vocab.encode(third[i]), Role::QO);
    push(Vocabulary::kSep, Role::Special);
    while (seq.length() < max_len) push(Vocabulary::kPad, Role::Pad);
    return seq;
}

}  // namespace

EncodedSequence pack_sequence(const std::vector<std::string>& passage_tokens,
                              const std::vector<std::string>& question_tokens,
                              const std::vector<std::string>& option_tokens, const Vocabulary& vocab,
                              int max_len) {
    if (passage_tokens.empty() || question_tokens.empty() || option_tokens.empty())
        throw UsageError("pack_sequence: empty input segment");
    if (max_len < 4) throw UsageError("pack_sequence: max_len too small");
    return pack_impl(passage_tokens, question_tokens, option_tokens, vocab, max_len);
}

EncodedSequence pack_pair(const std::vector<std::string>& premise_tokens,
                          const std::vector<std::string>& hypothesis_tokens, const Vocabulary& vocab,
                          int max_len) {
    if (premise_tokens.empty() || hypothesis_tokens.empty())
        throw UsageError("pack_pair: empty input segment");
    if (max_len < 4) throw UsageError("pack_pair: max_len too small");
    return pack_impl(premise_tokens, hypothesis_tokens, {}, vocab, max_len);
}

EncodedSequence strip_padding(const EncodedSequence& seq) {
    int keep = seq.length();
    while (keep > 0 && seq.roles[static_cast<size_t>(keep) - 1] == Role::Pad) --keep;
    EncodedSequence out;
    out.ids.assign(seq.ids.begin(), seq.ids.begin() + keep);
    out.roles.assign(seq.roles.begin(), seq.roles.begin() + keep);
    out.attention_mask.assign(seq.attention_mask.begin(), seq.attention_mask.begin() + keep);
    return out;
}

// ---------------------------------------------------------------------------
// JSON datasets
// ---------------------------------------------------------------------------

namespace {

json parse_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw LoadError("cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const std::exception& e) {
        throw LoadError("malformed JSON in '" + path + "': " + e.what());
    }
    return j;
}

[[noreturn]] void record_error(const std::string& path, size_t index, const std::string& what) {
    throw LoadError("'" + path + "' record " + std::to_string(index) + ": " + what);
}

}  // namespace

std::vector<MCQAExample> load_mcqa_json(const std::string& path) {
    json j = parse_file(path);
    if (!j.is_array()) throw LoadError("'" + path + "': top-level JSON array expected");
    std::vector<MCQAExample> out;
    out.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        const json& r = j[i];
        if (!r.is_object()) record_error(path, i, "object expected");
        MCQAExample e;
        if (!r.contains("id") || !r["id"].is_string()) record_error(path, i, "missing string field 'id'");
        e.id = r["id"].get<std::string>();
        if (!r.contains("passage") || !r["passage"].is_array())
            record_error(path, i, "missing array field 'passage'");
        for (const auto& u : r["passage"]) {
            if (!u.is_string()) record_error(path, i, "'passage' entries must be strings");
            e.passage.push_back(u.get<std::string>());
        }
        if (!r.contains("question") || !r["question"].is_string())
            record_error(path, i, "missing string field 'question'");
        e.question = r["question"].get<std::string>();
        if (!r.contains("options") || !r["options"].is_array())
            record_error(path, i, "missing array field 'options'");
        for (const auto& o : r["options"]) {
            if (!o.is_string()) record_error(path, i, "'options' entries must be strings");
            e.options.push_back(o.get<std::string>());
        }
        const int n = static_cast<int>(e.options.size());
        if (n < 2 || n > 5) record_error(path, i, "option count must be in [2,5]");
        if (r.contains("label")) {
            if (!r["label"].is_number_integer()) record_error(path, i, "'label' must be an integer");
            int label = r["label"].get<int>();
            if (label < 0 || label >= n)
                record_error(path, i,
                             "label " + std::to_string(label) + " out of range for " +
                                 std::to_string(n) + " options");
            e.label = label;
        }
        out.push_back(std::move(e));
    }
    return out;
}

std::vector<PairExample> load_pair_json(const std::string& path) {
    json j = parse_file(path);
    if (!j.is_array()) throw LoadError("'" + path + "': top-level JSON array expected");
    std::vector<PairExample> out;
    out.reserve(j.size());
    for (size_t i = 0; i < j.size(); ++i) {
        const json& r = j[i];
        if (!r.is_object()) record_error(path, i, "object expected");
        PairExample e;
        if (!r.contains("premise") || !r["premise"].is_string())
            record_error(path, i, "missing string field 'premise'");
        e.premise = r["premise"].get<std::string>();
        if (!r.contains("hypothesis") || !r["hypothesis"].is_string())
            record_error(path, i, "missing string field 'hypothesis'");
        e.hypothesis = r["hypothesis"].get<std::string>();
        if (!r.contains("label") || !r["label"].is_number_integer())
            record_error(path, i, "missing integer field 'label'");
        e.label = r["label"].get<int>();
        if (e.label < 0 || e.label > 2) record_error(path, i, "label must be 0, 1 or 2");
        out.push_back(std::move(e));
    }
    return out;
}

void save_mcqa_json(const std::string& path, const std::vector<MCQAExample>& examples) {
    json arr = json::array();
    for (const auto& e : examples) {
        json r;
        r["id"] = e.id;
        r["passage"] = e.passage;
        r["question"] = e.question;
        r["options"] = e.options;
        if (e.label.has_value()) r["label"] = *e.label;
        arr.push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << arr.dump(1) << "\n";
}

void save_pair_json(const std::string& path, const std::vector<PairExample>& examples) {
    json arr = json::array();
    for (const auto& e : examples) {
        json r;
        r["premise"] = e.premise;
        r["hypothesis"] = e.hypothesis;
        r["label"] = e.label;
        arr.push_back(std::move(r));
    }
    std::ofstream out(path);
    if (!out) throw UsageError("cannot write '" + path + "'");
    out << arr.dump(1) << "\n";
}

// ---------------------------------------------------------------------------
// synthetic tasks
// ---------------------------------------------------------------------------

namespace {

const std::vector<std::string>& content_syllables() {
    static const std::vector<std::string> s = {"ba", "da", "ga", "ka", "la", "ma", "na",
                                               "pa", "ra", "sa", "ta", "va", "za", "bo",
                                               "do", "go", "ko", "lo", "mo", "no"};
    return s;
}
const std::vector<std::string>& synonym_syllables() {
    static const std::vector<std::string> s = {"be", "de", "ge", "ke", "le", "me", "ne",
                                               "pe", "re", "se", "te", "ve", "ze", "bu",
                                               "du", "gu", "ku", "lu", "mu", "nu"};
    return s;
}
const std::vector<std::string>& antonym_syllables() {
    static const std::vector<std::string> s = {"bi", "di", "gi", "ki", "li", "mi", "ni",
                                               "pi", "ri", "si", "ti", "vi", "zi", "by",
                                               "dy", "gy", "ky", "ly", "my", "ny"};
    return s;
}

std::string make_word(int index, const std::vector<std::string>& syllables) {
    const int b = static_cast<int>(syllables.size());
    std::string w = syllables[(index / b) % b] + syllables[index % b];
    if (index >= b * b) w = syllables[(index / (b * b)) % b] + w;
    return w;
}

std::string join(const std::vector<std::string>& words) {
    std::string out;
    for (size_t i = 0; i < words.size(); ++i) {
        if (i) out += ' ';
        out += words[i];
    }
    return out;
}

void validate_spec(const SyntheticSpec& spec) {
    if (spec.count <= 0) throw UsageError("synthetic spec: count must be positive");
    if (spec.options < 2 || spec.options > 5) throw UsageError("synthetic spec: options must be in [2,5]");
    if (spec.sentences_per_passage < 1)
        throw UsageError("synthetic spec: sentences_per_passage must be positive");
    if (spec.sentence_len < 1) throw UsageError("synthetic spec: sentence_len must be positive");
    if (spec.vocab_pool < spec.sentences_per_passage + spec.options)
        throw UsageError("synthetic spec: vocab_pool too small for distinct topics");
}

}  // namespace

SynonymTable::SynonymTable(int vocab_pool, int table_id) {
    if (vocab_pool < 1) throw UsageError("synonym table: vocab_pool must be positive");
    content_.reserve(static_cast<size_t>(vocab_pool));
    for (int i = 0; i < vocab_pool; ++i) content_.push_back(make_word(i, content_syllables()));

    Rng syn_rng(mix_seed(mix_seed(0x5eedULL, "syn-table"), static_cast<uint64_t>(table_id)));
    Rng ant_rng(mix_seed(mix_seed(0x5eedULL, "ant-table"), static_cast<uint64_t>(table_id)));
    std::vector<int> syn_perm = syn_rng.permutation(vocab_pool);
    std::vector<int> ant_perm = ant_rng.permutation(vocab_pool);
    for (int i = 0; i < vocab_pool; ++i) {
        syn_[content_[i]] = make_word(syn_perm[i], synonym_syllables());
        ant_[content_[i]] = make_word(ant_perm[i], antonym_syllables());
    }
}

const std::string& SynonymTable::synonym(const std::string& w) const {
    auto it = syn_.find(w);
    if (it == syn_.end()) throw UsageError("synonym table: unknown content word '" + w + "'");
    return it->second;
}

const std::string& SynonymTable::antonym(const std::string& w) const {
    auto it = ant_.find(w);
    if (it == ant_.end()) throw UsageError("synonym table: unknown content word '" + w + "'");
    return it->second;
}

bool SynonymTable::is_content(const std::string& w) const { return syn_.count(w) > 0; }

std::vector<std::string> SynonymTable::rewrite_synonym(const std::vector<std::string>& words) const {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(is_content(w) ? synonym(w) : w);
    return out;
}

std::vector<std::string> SynonymTable::rewrite_antonym(const std::vector<std::string>& words) const {
    std::vector<std::string> out;
    out.reserve(words.size());
    for (const auto& w : words) out.push_back(is_content(w) ? antonym(w) : w);
    return out;
}

std::vector<MCQAExample> gen_synthetic_mcqa(const SyntheticSpec& spec) {
    validate_spec(spec);
    SynonymTable table(spec.vocab_pool, spec.table_id);
    const auto& pool = table.content_words();
    Rng rng(mix_seed(spec.seed, "mcqa"));

    const int k = spec.sentences_per_passage;
    const int n = spec.options;
    std::vector<MCQAExample> out;
    out.reserve(static_cast<size_t>(spec.count));

    for (int ex = 0; ex < spec.count; ++ex) {
        // distinct topic word per sentence plus spares for fresh distractors
        const int needed = k + std::max(0, n - 1 - (k - 1));
        std::vector<int> topic_ids;
        std::set<int> used;
        while (static_cast<int>(topic_ids.size()) < needed) {
            int t = rng.uniform_int(spec.vocab_pool);
            if (used.insert(t).second) topic_ids.push_back(t);
        }
        auto make_body = [&](int topic_idx) {
            std::vector<std::string> body;
            body.push_back(pool[static_cast<size_t>(topic_idx)]);
            for (int w = 1; w < spec.sentence_len; ++w)
                body.push_back(pool[static_cast<size_t>(rng.uniform_int(spec.vocab_pool))]);
            return body;
        };
        std::vector<std::vector<std::string>> bodies;
        for (int s = 0; s < k; ++s) bodies.push_back(make_body(topic_ids[static_cast<size_t>(s)]));

        const int evidence = rng.uniform_int(k);
        const bool speaker_q =
            spec.speaker_tags && rng.uniform() < spec.speaker_question_ratio;

        std::vector<std::string> tags(static_cast<size_t>(k));
        if (spec.speaker_tags) {
            // the evidence speaker is unique once w/f collapse to "woman"
            const char* male[] = {"m"};
            const char* female[] = {"w", "f"};
            bool evidence_male = rng.uniform() < 0.5;
            for (int s = 0; s < k; ++s) {
                if (s == evidence)
                    tags[static_cast<size_t>(s)] =
                        evidence_male ? male[0] : female[rng.uniform_int(2)];
                else
                    tags[static_cast<size_t>(s)] =
                        evidence_male ? female[rng.uniform_int(2)] : male[0];
            }
        }

        MCQAExample e;
        e.id = "synth-" + std::to_string(spec.seed) + "-" + std::to_string(ex);
        for (int s = 0; s < k; ++s) {
            std::string line = join(bodies[static_cast<size_t>(s)]);
            if (spec.speaker_tags) line = tags[static_cast<size_t>(s)] + ": " + line;
            e.passage.push_back(line);
        }
        if (speaker_q) {
            const std::string who = tags[static_cast<size_t>(evidence)] == "m" ? "man" : "woman";
            e.question = "what did " + who + " say ?";
        } else {
            e.question = "what about " + bodies[static_cast<size_t>(evidence)][0] + " ?";
        }

        std::vector<std::string> correct =
            table.rewrite_synonym(bodies[static_cast<size_t>(evidence)]);
        std::vector<std::vector<std::string>> distractors;
        std::vector<int> others;
        for (int s = 0; s < k; ++s)
            if (s != evidence) others.push_back(s);
        rng.shuffle(others);
        for (int s : others) {
            if (static_cast<int>(distractors.size()) == n - 1) break;
            distractors.push_back(table.rewrite_synonym(bodies[static_cast<size_t>(s)]));
        }
        int spare = k;
        while (static_cast<int>(distractors.size()) < n - 1) {
            distractors.push_back(
                table.rewrite_synonym(make_body(topic_ids[static_cast<size_t>(spare++)])));
        }

        const int correct_pos = rng.uniform_int(n);
        e.options.resize(static_cast<size_t>(n));
        size_t d = 0;
        for (int i = 0; i < n; ++i) {
            if (i == correct_pos)
                e.options[static_cast<size_t>(i)] = join(correct);
            else
                e.options[static_cast<size_t>(i)] = join(distractors[d++]);
        }
        e.label = correct_pos;
        out.push_back(std::move(e));
    }
    return out;
}

namespace {

// strip a normalized speaker prefix ("man :" / "woman :") if present
std::vector<std::string> utterance_body(const std::vector<std::string>& toks, std::string* who) {
    if (toks.size() >= 3 && (toks[0] == "man" || toks[0] == "woman") && toks[1] == ":") {
        if (who) *who = toks[0];
        return std::vector<std::string>(toks.begin() + 2, toks.end());
    }
    if (who) who->clear();
    return toks;
}

}  // namespace

int synthetic_mcqa_oracle(const MCQAExample& example, const SynonymTable& table) {
    std::vector<std::vector<std::string>> bodies;
    std::vector<std::string> speakers;
    for (const auto& utt : example.passage) {
        std::string who;
        auto toks = tokenize(speaker_normalize(utt));
        bodies.push_back(utterance_body(toks, &who));
        speakers.push_back(who);
    }
    const auto q = tokenize(example.question);
    int evidence = -1;
    if (q.size() >= 4 && q[0] == "what" && q[1] == "did" && q[3] == "say") {
        for (size_t s = 0; s < speakers.size(); ++s) {
            if (speakers[s] == q[2]) {
                if (evidence >= 0) return -1;  // ambiguous
                evidence = static_cast<int>(s);
            }
        }
    } else if (q.size() >= 3 && q[0] == "what" && q[1] == "about") {
        for (size_t s = 0; s < bodies.size(); ++s) {
            if (!bodies[s].empty() && bodies[s][0] == q[2]) {
                if (evidence >= 0) return -1;
                evidence = static_cast<int>(s);
            }
        }
    }
    if (evidence < 0) return -1;
    const auto expected = table.rewrite_synonym(bodies[static_cast<size_t>(evidence)]);
    for (size_t i = 0; i < example.options.size(); ++i)
        if (tokenize(example.options[i]) == expected) return static_cast<int>(i);
    return -1;
}

std::vector<PairExample> gen_synthetic_nli(const SyntheticSpec& spec) {
    validate_spec(spec);
    SynonymTable table(spec.vocab_pool, spec.table_id);
    const auto& pool = table.content_words();
    Rng rng(mix_seed(spec.seed, "nli"));

    auto make_body = [&] {
        std::vector<std::string> body;
        for (int w = 0; w < spec.sentence_len; ++w)
            body.push_back(pool[static_cast<size_t>(rng.uniform_int(spec.vocab_pool))]);
        return body;
    };

    std::vector<PairExample> out;
    out.reserve(static_cast<size_t>(spec.count));
    for (int ex = 0; ex < spec.count; ++ex) {
        PairExample e;
        auto premise = make_body();
        e.premise = join(premise);
        e.label = rng.uniform_int(3);
        if (e.label == 0) {
            e.hypothesis = join(table.rewrite_synonym(premise));
        } else if (e.label == 2) {
            e.hypothesis = join(table.rewrite_antonym(premise));
        } else {
            auto hyp = make_body();
            while (hyp == premise) hyp = make_body();
            // neutral hypotheses live in the paraphrase vocabulary as well so
            // entailment is not separable from neutral by token set alone
            e.hypothesis = join(table.rewrite_synonym(hyp));
        }
        out.push_back(std::move(e));
    }
    return out;
}

int synthetic_nli_oracle(const PairExample& example, const SynonymTable& table) {
    const auto prem = tokenize(example.premise);
    const auto hyp = tokenize(example.hypothesis);
    if (table.rewrite_synonym(prem) == hyp) return 0;
    if (table.rewrite_antonym(prem) == hyp) return 2;
    return 1;
}

}  // namespace mmm
