#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "mmm/rng.hpp"
#include "mmm/tensor.hpp"

namespace mmm {

enum class Role : uint8_t { Special, Passage, QO, Pad };

// Packed token ids with per-token role labels. PAD only at the tail, CLS at
// position 0.
struct EncodedSequence {
    std::vector<int> ids;
    std::vector<Role> roles;
    std::vector<int> attention_mask;  // 1 for non-PAD

    int length() const { return static_cast<int>(ids.size()); }
    bool operator==(const EncodedSequence&) const = default;
};

struct MCQAExample {
    std::string id;
    std::vector<std::string> passage;  // ordered utterances / sentences
    std::string question;
    std::vector<std::string> options;  // 2..5
    std::optional<int> label;
};

// premise/hypothesis pair; label 0=entailment, 1=neutral, 2=contradiction
struct PairExample {
    std::string premise;
    std::string hypothesis;
    int label = 0;
};

class Vocabulary {
  public:
    static constexpr int kPad = 0;
    static constexpr int kUnk = 1;
    static constexpr int kCls = 2;
    static constexpr int kSep = 3;

    Vocabulary();
    explicit Vocabulary(const std::vector<std::string>& tokens);  // non-reserved tokens, in id order

    int size() const { return static_cast<int>(id_to_token_.size()); }
    int encode(const std::string& token) const;  // kUnk when absent
    const std::string& decode(int id) const;
    bool contains(const std::string& token) const;

    // Non-reserved tokens in id order (for serialization).
    std::vector<std::string> tokens() const;

  private:
    void add(const std::string& token);
    std::map<std::string, int> token_to_id_;
    std::vector<std::string> id_to_token_;
};

// Expands a leading single-letter speaker tag: "w:"/"f:" -> "woman:",
// "m:" -> "man:" (case-insensitive). Anything else passes through.
std::string speaker_normalize(const std::string& utterance);

// Lowercase, split on whitespace, punctuation characters become standalone
// tokens.
std::vector<std::string> tokenize(const std::string& text);

// Tokens with count >= min_freq, ids assigned after the reserved ids in
// (count desc, then lexicographic) order.
Vocabulary build_vocab(const std::vector<std::string>& corpus, int min_freq = 1);

// CLS + passage + SEP + question + option + SEP, padded to max_len. Over
// budget, the passage tail goes first, then the option tail, then the
// question tail.
EncodedSequence pack_sequence(const std::vector<std::string>& passage_tokens,
                              const std::vector<std::string>& question_tokens,
                              const std::vector<std::string>& option_tokens, const Vocabulary& vocab,
                              int max_len);

// CLS + premise + SEP + hypothesis + SEP with Passage/QO roles, same padding
// rule as pack_sequence.
EncodedSequence pack_pair(const std::vector<std::string>& premise_tokens,
                          const std::vector<std::string>& hypothesis_tokens, const Vocabulary& vocab,
                          int max_len);

// Drop trailing PAD positions (bit-exact under the encoder's pad masking).
EncodedSequence strip_padding(const EncodedSequence& seq);

std::vector<MCQAExample> load_mcqa_json(const std::string& path);
std::vector<PairExample> load_pair_json(const std::string& path);
void save_mcqa_json(const std::string& path, const std::vector<MCQAExample>& examples);
void save_pair_json(const std::string& path, const std::vector<PairExample>& examples);

// ---------------------------------------------------------------------------
// seeded synthetic tasks
// ---------------------------------------------------------------------------

struct SyntheticSpec {
    uint64_t seed = 1;
    int count = 1000;
    int vocab_pool = 40;            // content words
    int sentences_per_passage = 4;  // >= options recommended
    int options = 3;                // 2..5
    int table_id = 0;               // selects the paraphrase rule table
    int sentence_len = 4;           // content words per sentence
    bool speaker_tags = true;       // dialogue-style passages with m:/w:/f: tags
    double speaker_question_ratio = 0.5;  // fraction of "what did X say" questions
};

// Fixed word-substitution rules shared by the MCQA and NLI generators: every
// content word has a synonym (paraphrase) and an antonym counterpart.
class SynonymTable {
  public:
    SynonymTable(int vocab_pool, int table_id);

    const std::vector<std::string>& content_words() const { return content_; }
    const std::string& synonym(const std::string& content_word) const;
    const std::string& antonym(const std::string& content_word) const;
    bool is_content(const std::string& word) const;

    std::vector<std::string> rewrite_synonym(const std::vector<std::string>& words) const;
    std::vector<std::string> rewrite_antonym(const std::vector<std::string>& words) const;

  private:
    std::vector<std::string> content_;
    std::map<std::string, std::string> syn_;
    std::map<std::string, std::string> ant_;
};

std::vector<MCQAExample> gen_synthetic_mcqa(const SyntheticSpec& spec);
std::vector<PairExample> gen_synthetic_nli(const SyntheticSpec& spec);

// Rule-based solvers; by construction they are exact on generated data.
int synthetic_mcqa_oracle(const MCQAExample& example, const SynonymTable& table);
int synthetic_nli_oracle(const PairExample& example, const SynonymTable& table);

}  // namespace mmm
