#pragma once

#include <optional>
#include <string>
#include <vector>

namespace spcnav::parse {

// Coarse part-of-speech tags used by the rule parser.
enum class Pos {
    Noun,
    Verb,
    Aux,
    Det,
    Adp,   // preposition / particle
    Adv,
    Adj,
    Pron,
    Cconj,
    Sconj,
    Num,
    Punct,
    Delim,  // pseudo delimiter inserted after each configuration
    Other,
};

std::string pos_name(Pos p);
Pos pos_from_name(const std::string& name);

struct Token {
    int index = 0;
    std::string text;
    std::string lemma;
    Pos pos = Pos::Other;
    int head = 0;  // index of syntactic head; self-referential at root
    std::string deprel;
};

using Sentence = std::vector<Token>;

// Half-open token range [start, end).
struct Span {
    int start = 0;
    int end = 0;
    int length() const { return end - start; }
    bool contains(int i) const { return i >= start && i < end; }
    bool operator==(const Span&) const = default;
};

struct SpatialConfiguration {
    Span tokens;                            // over the delimiter-augmented stream
    std::optional<Span> motion_indicator;   // at most one
    std::optional<Span> spatial_indicator;  // absent when merged into the motion
    std::vector<Span> landmarks;
    std::optional<int> main_landmark;       // index into landmarks
    int delimiter_pos = 0;                  // == tokens.end
};

struct ParsedInstruction {
    std::vector<Sentence> sentences;                  // raw dependency-parsed input
    std::vector<SpatialConfiguration> configurations; // ordered, non-overlapping
    std::vector<Token> token_stream;                  // flattened, delimiters inserted

    // Projects a stream-coordinate span of configuration `config_index` back
    // onto the raw token sequence (the stream minus delimiters).
    Span to_raw(const Span& s, int config_index) const;
};

// Multi-word verb phrases, matched longest-first at a verb anchor.
class MotionLexicon {
public:
    static MotionLexicon load(const std::string& path);
    static MotionLexicon from_phrases(const std::vector<std::string>& phrases);

    std::size_t size() const { return phrases_.size(); }
    // Longest phrase (token count) starting at `pos`, or 0 if none matches.
    int match_at(const Sentence& sent, int pos) const;

private:
    std::vector<std::vector<std::string>> phrases_;  // lowercase token lists
};

struct GoldConfiguration {
    Span span;  // raw token coordinates
    std::optional<Span> motion;
    std::optional<Span> spatial;
    std::vector<Span> landmarks;
    std::optional<int> main_landmark;
};

struct GoldAnnotation {
    std::string instruction_id;
    std::vector<GoldConfiguration> configurations;
};

struct ParserReport {
    double configuration_accuracy = 0.0;  // boundary exact match
    double indicator_accuracy = 0.0;      // motion/spatial exact match
    double landmark_accuracy = 0.0;       // landmark span set exact match
    std::size_t instruction_count = 0;
    std::size_t gold_configuration_count = 0;
};

// ---- operations ----

// 10-column tab-separated token lines, blank line between sentences, '#'
// comments ignored. Columns: index, text, lemma, upos, xpos, feats, head,
// deprel, deps, misc. Indices are 0-based; the root token has head == index.
std::vector<Sentence> load_parsed_corpus(const std::string& path);
std::vector<Sentence> parse_corpus_text(const std::string& text, const std::string& origin);

std::vector<std::string> split_sentences(const std::string& raw);
std::vector<std::string> tokenize(const std::string& sentence);

// Deterministic fallback tagger + head assigner for raw text input.
Sentence analyze_sentence(const std::vector<std::string>& words);

std::vector<Span> extract_motion_indicators(const Sentence& sent, const MotionLexicon& lexicon);

// Sentence-local configurations; spans are raw sentence coordinates here.
// A verbless sentence yields one configuration with no motion indicator.
std::vector<SpatialConfiguration> split_configurations(const Sentence& sent,
                                                       const std::vector<Span>& motions);

std::vector<Span> extract_landmarks(const SpatialConfiguration& config, const Sentence& sent);

std::optional<int> select_main_landmark(const SpatialConfiguration& config, const Sentence& sent);

int tree_depth(const Sentence& sent, int index);

ParsedInstruction parse_instruction(const std::string& raw, const MotionLexicon& lexicon);
ParsedInstruction parse_instruction(const std::vector<Sentence>& sentences,
                                    const MotionLexicon& lexicon);

GoldAnnotation to_annotation(const ParsedInstruction& parsed, const std::string& id);

ParserReport evaluate_parser(const std::vector<GoldAnnotation>& predicted,
                             const std::vector<GoldAnnotation>& gold);

// One JSON object per line: {instruction_id, configurations: [...]}.
std::string annotation_to_json(const GoldAnnotation& ann);
GoldAnnotation annotation_from_json(const std::string& line);

inline constexpr const char* kDelimiterText = "<cfg>";

// Bundled verb-phrase list; data/motion_lexicon.txt ships the same content.
const std::vector<std::string>& builtin_motion_phrases();
const MotionLexicon& builtin_lexicon();

}  // namespace spcnav::parse
