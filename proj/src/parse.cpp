#include "spcnav/parse.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

namespace spcnav::parse {

namespace {

std::string lower(const std::string& s) {
    std::string out = s;
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

const std::unordered_set<std::string>& det_words() {
    static const std::unordered_set<std::string> w = {"the", "a",     "an",
                                                      "this", "that", "these", "those"};
    return w;
}

const std::unordered_set<std::string>& aux_words() {
    static const std::unordered_set<std::string> w = {
        "is",  "are",  "was",   "were", "be",  "been",  "being", "am",  "will",
        "would", "can", "could", "should", "shall", "may", "might", "must", "do",
        "does", "did"};
    return w;
}

const std::unordered_set<std::string>& pron_words() {
    static const std::unordered_set<std::string> w = {
        "you", "i", "we", "they", "he", "she", "it", "your", "yourself",
        "them", "him", "her", "us", "me", "its", "there"};
    return w;
}

const std::unordered_set<std::string>& cconj_words() {
    static const std::unordered_set<std::string> w = {"and", "or", "but", "nor"};
    return w;
}

const std::unordered_set<std::string>& sconj_words() {
    static const std::unordered_set<std::string> w = {
        "once", "when", "after", "before", "until", "while", "if", "as",
        "because", "where", "so"};
    return w;
}

const std::unordered_set<std::string>& adp_words() {
    static const std::unordered_set<std::string> w = {
        "to",      "into",    "in",     "on",     "at",      "of",     "from",
        "with",    "without", "through", "past",  "towards", "toward", "up",
        "down",    "around",  "inside", "outside", "over",   "under",  "across",
        "along",   "onto",    "by",     "near",   "behind",  "beyond", "between",
        "above",   "below",   "off",    "out",    "against", "beside", "underneath"};
    return w;
}

const std::unordered_set<std::string>& adv_words() {
    static const std::unordered_set<std::string> w = {
        "straight", "forward", "forwards", "ahead", "slightly", "then",
        "here", "now", "away", "back", "immediately", "directly"};
    return w;
}

const std::unordered_set<std::string>& verb_words() {
    static const std::unordered_set<std::string> w = {
        "walk", "go",       "move",  "turn",  "head",   "stop",  "continue",
        "proceed", "take",  "make",  "jump",  "climb",  "enter", "exit",
        "pass", "keep",     "stand", "wait",  "stay",   "face",  "follow",
        "cross", "leave",   "step",  "veer",  "bear",   "run",   "approach",
        "reach", "begin",   "start", "navigate"};
    return w;
}

const std::unordered_set<std::string>& adj_words() {
    static const std::unordered_set<std::string> w = {
        "red",   "blue",  "green", "white", "black", "brown",  "wooden",
        "glass", "small", "large", "big",   "little", "old",   "new",
        "first", "second", "third", "last",  "next",  "dining", "dinning",
        "living", "rocking", "double", "long", "round", "tall"};
    return w;
}

bool is_punct(const std::string& s) {
    return s.size() == 1 && std::ispunct(static_cast<unsigned char>(s[0]));
}

bool is_number(const std::string& s) {
    if (s.empty()) return false;
    for (char c : s)
        if (!std::isdigit(static_cast<unsigned char>(c))) return false;
    return true;
}

bool noun_run_pos(Pos p) { return p == Pos::Det || p == Pos::Adj || p == Pos::Noun || p == Pos::Num; }

}  // namespace

std::string pos_name(Pos p) {
    switch (p) {
        case Pos::Noun: return "NOUN";
        case Pos::Verb: return "VERB";
        case Pos::Aux: return "AUX";
        case Pos::Det: return "DET";
        case Pos::Adp: return "ADP";
        case Pos::Adv: return "ADV";
        case Pos::Adj: return "ADJ";
        case Pos::Pron: return "PRON";
        case Pos::Cconj: return "CCONJ";
        case Pos::Sconj: return "SCONJ";
        case Pos::Num: return "NUM";
        case Pos::Punct: return "PUNCT";
        case Pos::Delim: return "DELIM";
        case Pos::Other: return "X";
    }
    return "X";
}

Pos pos_from_name(const std::string& name) {
    static const std::unordered_map<std::string, Pos> table = {
        {"NOUN", Pos::Noun},   {"PROPN", Pos::Noun}, {"VERB", Pos::Verb},
        {"AUX", Pos::Aux},     {"DET", Pos::Det},    {"ADP", Pos::Adp},
        {"PART", Pos::Adp},    {"ADV", Pos::Adv},    {"ADJ", Pos::Adj},
        {"PRON", Pos::Pron},   {"CCONJ", Pos::Cconj}, {"CONJ", Pos::Cconj},
        {"SCONJ", Pos::Sconj}, {"NUM", Pos::Num},    {"PUNCT", Pos::Punct},
        {"DELIM", Pos::Delim}, {"X", Pos::Other}};
    auto it = table.find(name);
    return it == table.end() ? Pos::Other : it->second;
}

Span ParsedInstruction::to_raw(const Span& s, int config_index) const {
    // Configuration i has exactly i delimiters inserted before it.
    return Span{s.start - config_index, s.end - config_index};
}

MotionLexicon MotionLexicon::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("lexicon: cannot open " + path);
    std::vector<std::string> phrases;
    std::string line;
    while (std::getline(is, line)) {
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty() || line[0] == '#') continue;
        phrases.push_back(line);
    }
    return from_phrases(phrases);
}

MotionLexicon MotionLexicon::from_phrases(const std::vector<std::string>& phrases) {
    MotionLexicon lex;
    std::set<std::vector<std::string>> seen;
    for (const auto& p : phrases) {
        std::istringstream ss(lower(p));
        std::vector<std::string> words;
        std::string w;
        while (ss >> w) words.push_back(w);
        if (words.empty()) continue;
        if (seen.insert(words).second) lex.phrases_.push_back(words);
    }
    // Longest-match-first.
    std::sort(lex.phrases_.begin(), lex.phrases_.end(),
              [](const auto& a, const auto& b) {
                  if (a.size() != b.size()) return a.size() > b.size();
                  return a < b;
              });
    return lex;
}

int MotionLexicon::match_at(const Sentence& sent, int pos) const {
    for (const auto& phrase : phrases_) {
        if (pos + static_cast<int>(phrase.size()) > static_cast<int>(sent.size())) continue;
        bool ok = true;
        for (std::size_t j = 0; j < phrase.size(); ++j) {
            if (lower(sent[pos + static_cast<int>(j)].text) != phrase[j]) {
                ok = false;
                break;
            }
        }
        if (ok) return static_cast<int>(phrase.size());
    }
    return 0;
}

namespace {

void validate_tree(const Sentence& sent, const std::string& origin) {
    const int n = static_cast<int>(sent.size());
    int roots = 0;
    for (const auto& t : sent) {
        if (t.head < 0 || t.head >= n)
            throw std::runtime_error(origin + ": head index out of range for token " +
                                     std::to_string(t.index));
        if (t.head == t.index) ++roots;
    }
    if (roots != 1)
        throw std::runtime_error(origin + ": sentence must have exactly one root, found " +
                                 std::to_string(roots));
    for (int i = 0; i < n; ++i) {
        int cur = i, hops = 0;
        while (sent[cur].head != cur) {
            cur = sent[cur].head;
            if (++hops > n)
                throw std::runtime_error(origin + ": cyclic head chain at token " +
                                         std::to_string(i));
        }
    }
}

}  // namespace

std::vector<Sentence> parse_corpus_text(const std::string& text, const std::string& origin) {
    std::vector<Sentence> out;
    Sentence cur;
    std::istringstream is(text);
    std::string line;
    int lineno = 0;
    auto flush = [&]() {
        if (cur.empty()) return;
        validate_tree(cur, origin);
        out.push_back(std::move(cur));
        cur.clear();
    };
    while (std::getline(is, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) {
            flush();
            continue;
        }
        if (line[0] == '#') continue;
        std::vector<std::string> cols;
        std::size_t start = 0;
        while (true) {
            std::size_t tab = line.find('\t', start);
            cols.push_back(line.substr(start, tab == std::string::npos ? tab : tab - start));
            if (tab == std::string::npos) break;
            start = tab + 1;
        }
        if (cols.size() != 10)
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": expected 10 tab-separated columns, got " +
                                     std::to_string(cols.size()));
        Token t;
        try {
            t.index = std::stoi(cols[0]);
            t.head = std::stoi(cols[6]);
        } catch (const std::exception&) {
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": non-integer index or head");
        }
        t.text = cols[1];
        t.lemma = cols[2].empty() || cols[2] == "_" ? lower(cols[1]) : cols[2];
        t.pos = pos_from_name(cols[3]);
        t.deprel = cols[7];
        if (t.index != static_cast<int>(cur.size()))
            throw std::runtime_error(origin + ":" + std::to_string(lineno) +
                                     ": token indices must be contiguous from 0");
        cur.push_back(std::move(t));
    }
    flush();
    return out;
}

std::vector<Sentence> load_parsed_corpus(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("corpus: cannot open " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return parse_corpus_text(ss.str(), path);
}

std::vector<std::string> split_sentences(const std::string& raw) {
    std::vector<std::string> out;
    std::string cur;
    for (std::size_t i = 0; i < raw.size(); ++i) {
        cur.push_back(raw[i]);
        const char c = raw[i];
        if (c == '.' || c == '!' || c == '?') {
            const bool at_end = i + 1 >= raw.size();
            const bool before_space =
                !at_end && std::isspace(static_cast<unsigned char>(raw[i + 1]));
            if (at_end || before_space) {
                // Trim and emit.
                std::size_t b = cur.find_first_not_of(" \t\r\n");
                std::size_t e = cur.find_last_not_of(" \t\r\n");
                if (b != std::string::npos) out.push_back(cur.substr(b, e - b + 1));
                cur.clear();
            }
        }
    }
    std::size_t b = cur.find_first_not_of(" \t\r\n");
    if (b != std::string::npos) {
        std::size_t e = cur.find_last_not_of(" \t\r\n");
        out.push_back(cur.substr(b, e - b + 1));
    }
    return out;
}

std::vector<std::string> tokenize(const std::string& sentence) {
    std::vector<std::string> out;
    std::string cur;
    auto flush = [&]() {
        if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    };
    for (char c : sentence) {
        if (std::isspace(static_cast<unsigned char>(c))) {
            flush();
        } else if (std::isalnum(static_cast<unsigned char>(c)) || c == '\'' || c == '-') {
            cur.push_back(c);
        } else {
            flush();
            out.push_back(std::string(1, c));
        }
    }
    flush();
    return out;
}

namespace {

Pos tag_word(const std::vector<std::string>& words, const std::vector<Pos>& tags, int i) {
    const std::string w = lower(words[static_cast<std::size_t>(i)]);
    if (is_punct(w)) return Pos::Punct;
    if (is_number(w)) return Pos::Num;
    if (det_words().count(w)) return Pos::Det;
    if (aux_words().count(w)) return Pos::Aux;
    if (cconj_words().count(w)) return Pos::Cconj;
    if (sconj_words().count(w)) return Pos::Sconj;
    if (adp_words().count(w)) return Pos::Adp;
    if (pron_words().count(w)) return Pos::Pron;
    if (adv_words().count(w)) return Pos::Adv;
    if (adj_words().count(w)) return Pos::Adj;
    if (w == "left" || w == "right") {
        // Directional particle after a verb ("turn left"), noun otherwise
        // ("the counter on the right").
        for (int j = i - 1; j >= 0; --j) {
            if (tags[static_cast<std::size_t>(j)] == Pos::Adv) continue;
            return tags[static_cast<std::size_t>(j)] == Pos::Verb ? Pos::Adv : Pos::Noun;
        }
        return Pos::Noun;
    }
    if (verb_words().count(w)) {
        if (i > 0) {
            const Pos prev = tags[static_cast<std::size_t>(i - 1)];
            if (prev == Pos::Det || prev == Pos::Adj || prev == Pos::Num) return Pos::Noun;
        }
        return Pos::Verb;
    }
    return Pos::Noun;
}

}  // namespace

Sentence analyze_sentence(const std::vector<std::string>& words) {
    const int n = static_cast<int>(words.size());
    std::vector<Pos> tags;
    tags.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) tags.push_back(tag_word(words, tags, i));

    // Root is the first verb; a verbless sentence roots at its first token.
    int root = 0;
    for (int i = 0; i < n; ++i)
        if (tags[static_cast<std::size_t>(i)] == Pos::Verb) {
            root = i;
            break;
        }

    Sentence sent(static_cast<std::size_t>(n));
    auto prev_of = [&](int i, std::initializer_list<Pos> stops) -> int {
        for (int j = i - 1; j >= 0; --j)
            for (Pos p : stops)
                if (tags[static_cast<std::size_t>(j)] == p) return j;
        return -1;
    };
    auto next_of = [&](int i, std::initializer_list<Pos> stops) -> int {
        for (int j = i + 1; j < n; ++j)
            for (Pos p : stops)
                if (tags[static_cast<std::size_t>(j)] == p) return j;
        return -1;
    };

    for (int i = 0; i < n; ++i) {
        Token& t = sent[static_cast<std::size_t>(i)];
        t.index = i;
        t.text = words[static_cast<std::size_t>(i)];
        t.lemma = lower(words[static_cast<std::size_t>(i)]);
        t.pos = tags[static_cast<std::size_t>(i)];
        int head = root;
        std::string rel = "dep";
        switch (t.pos) {
            case Pos::Verb:
                if (i == root) {
                    head = i;
                    rel = "root";
                } else {
                    head = root;
                    rel = "conj";
                }
                break;
            case Pos::Adp: {
                const int p = prev_of(i, {Pos::Noun, Pos::Verb});
                if (p >= 0) {
                    head = p;
                    rel = "prep";
                } else {
                    const int q = next_of(i, {Pos::Verb, Pos::Noun});
                    head = q >= 0 ? q : root;
                    rel = "prep";
                }
                break;
            }
            case Pos::Noun:
            case Pos::Num: {
                // Compound: a noun followed by another noun in the same run
                // heads to the run-final noun.
                int run_end = i;
                while (run_end + 1 < n && noun_run_pos(tags[static_cast<std::size_t>(run_end + 1)]))
                    ++run_end;
                int last_noun = -1;
                for (int j = run_end; j > i; --j)
                    if (tags[static_cast<std::size_t>(j)] == Pos::Noun) {
                        last_noun = j;
                        break;
                    }
                if (last_noun > i) {
                    head = last_noun;
                    rel = "compound";
                    break;
                }
                const int p = prev_of(i, {Pos::Adp, Pos::Verb, Pos::Noun});
                if (p >= 0) {
                    head = p;
                    rel = tags[static_cast<std::size_t>(p)] == Pos::Adp   ? "pobj"
                          : tags[static_cast<std::size_t>(p)] == Pos::Verb ? "dobj"
                                                                           : "conj";
                } else {
                    head = root;
                    rel = i == root ? "root" : "dep";
                    if (i == root) head = i;
                }
                break;
            }
            case Pos::Det:
            case Pos::Adj: {
                const int q = next_of(i, {Pos::Noun});
                head = q >= 0 ? q : root;
                rel = t.pos == Pos::Det ? "det" : "amod";
                break;
            }
            case Pos::Pron: {
                const int q = next_of(i, {Pos::Verb});
                if (q >= 0) {
                    head = q;
                    rel = "nsubj";
                } else {
                    const int p = prev_of(i, {Pos::Verb, Pos::Adp, Pos::Noun});
                    head = p >= 0 ? p : root;
                    rel = "dep";
                }
                break;
            }
            case Pos::Sconj: {
                const int q = next_of(i, {Pos::Verb});
                head = q >= 0 ? q : root;
                rel = "mark";
                break;
            }
            case Pos::Adv: {
                const int p = prev_of(i, {Pos::Verb});
                if (p >= 0) {
                    head = p;
                    rel = "advmod";
                } else {
                    const int q = next_of(i, {Pos::Verb});
                    head = q >= 0 ? q : root;
                    rel = "advmod";
                }
                break;
            }
            case Pos::Aux: {
                const int q = next_of(i, {Pos::Verb});
                head = q >= 0 ? q : root;
                rel = "aux";
                break;
            }
            default:
                head = root;
                rel = t.pos == Pos::Punct ? "punct" : t.pos == Pos::Cconj ? "cc" : "dep";
                break;
        }
        if (i == root) {
            head = i;
            rel = "root";
        }
        t.head = head;
        t.deprel = rel;
    }
    return sent;
}

int tree_depth(const Sentence& sent, int index) {
    int depth = 0, cur = index;
    const int n = static_cast<int>(sent.size());
    while (sent[static_cast<std::size_t>(cur)].head != cur) {
        cur = sent[static_cast<std::size_t>(cur)].head;
        if (++depth > n) throw std::runtime_error("tree_depth: cyclic heads");
    }
    return depth;
}

std::vector<Span> extract_motion_indicators(const Sentence& sent, const MotionLexicon& lexicon) {
    std::vector<Span> out;
    const int n = static_cast<int>(sent.size());
    int i = 0;
    while (i < n) {
        if (sent[static_cast<std::size_t>(i)].pos != Pos::Verb) {
            ++i;
            continue;
        }
        int len = lexicon.match_at(sent, i);
        if (len == 0) len = 1;  // bare verb fallback
        int end = i + len;
        // Merge verb-attached prepositions that immediately follow, e.g.
        // "move" + "to" -> "move to".
        while (end < n && sent[static_cast<std::size_t>(end)].pos == Pos::Adp) {
            const int h = sent[static_cast<std::size_t>(end)].head;
            if (h < i || h >= end) break;
            ++end;
        }
        out.push_back(Span{i, end});
        i = end;
    }
    return out;
}

namespace {

// Leftmost token of the dependency subtree rooted at `index`.
int leftmost_descendant(const Sentence& sent, int index) {
    const int n = static_cast<int>(sent.size());
    std::vector<char> in_subtree(static_cast<std::size_t>(n), 0);
    in_subtree[static_cast<std::size_t>(index)] = 1;
    // Repeated sweeps; trees are tiny.
    bool changed = true;
    while (changed) {
        changed = false;
        for (int i = 0; i < n; ++i) {
            if (in_subtree[static_cast<std::size_t>(i)]) continue;
            const int h = sent[static_cast<std::size_t>(i)].head;
            if (h != i && in_subtree[static_cast<std::size_t>(h)]) {
                in_subtree[static_cast<std::size_t>(i)] = 1;
                changed = true;
            }
        }
    }
    for (int i = 0; i < n; ++i)
        if (in_subtree[static_cast<std::size_t>(i)]) return i;
    return index;
}

}  // namespace

std::vector<SpatialConfiguration> split_configurations(const Sentence& sent,
                                                       const std::vector<Span>& motions) {
    const int n = static_cast<int>(sent.size());
    std::vector<SpatialConfiguration> out;
    if (n == 0) return out;
    if (motions.empty()) {
        SpatialConfiguration c;
        c.tokens = Span{0, n};
        c.delimiter_pos = n;
        out.push_back(c);
        return out;
    }
    // Configuration i starts at the leftmost token of its motion verb's
    // subtree, clamped so the previous motion stays in the previous
    // configuration. Leading tokens attach to the first configuration.
    std::vector<int> starts(motions.size(), 0);
    for (std::size_t i = 1; i < motions.size(); ++i) {
        const int lm = leftmost_descendant(sent, motions[i].start);
        starts[i] = std::max({lm, motions[i - 1].end, starts[i - 1] + 1});
        starts[i] = std::min(starts[i], motions[i].start);
    }
    for (std::size_t i = 0; i < motions.size(); ++i) {
        SpatialConfiguration c;
        const int end = i + 1 < motions.size() ? starts[i + 1] : n;
        c.tokens = Span{starts[i], end};
        c.motion_indicator = motions[i];
        c.delimiter_pos = end;
        out.push_back(c);
    }
    return out;
}

std::vector<Span> extract_landmarks(const SpatialConfiguration& config, const Sentence& sent) {
    std::vector<Span> runs;
    int i = config.tokens.start;
    const int end = std::min(config.tokens.end, static_cast<int>(sent.size()));
    while (i < end) {
        if (!noun_run_pos(sent[static_cast<std::size_t>(i)].pos)) {
            ++i;
            continue;
        }
        int j = i;
        bool has_noun = false;
        while (j < end && noun_run_pos(sent[static_cast<std::size_t>(j)].pos)) {
            if (sent[static_cast<std::size_t>(j)].pos == Pos::Noun) has_noun = true;
            ++j;
        }
        if (has_noun) runs.push_back(Span{i, j});
        i = j;
    }
    // Adjacent noun phrases linked by "of" collapse into one landmark.
    std::vector<Span> collapsed;
    for (const auto& r : runs) {
        if (!collapsed.empty()) {
            const Span& prev = collapsed.back();
            if (r.start == prev.end + 1 &&
                lower(sent[static_cast<std::size_t>(prev.end)].text) == "of") {
                collapsed.back().end = r.end;
                continue;
            }
        }
        collapsed.push_back(r);
    }
    // Drop runs whose head noun sits inside the motion indicator phrase
    // ("a left" in "make a left turn" is not a landmark).
    std::vector<Span> out;
    for (const auto& r : collapsed) {
        int head_noun = -1;
        int best_depth = 1 << 30;
        for (int k = r.start; k < r.end; ++k) {
            if (sent[static_cast<std::size_t>(k)].pos != Pos::Noun) continue;
            const int d = tree_depth(sent, k);
            if (d < best_depth) {
                best_depth = d;
                head_noun = k;
            }
        }
        if (head_noun < 0) continue;
        if (config.motion_indicator && config.motion_indicator->contains(head_noun)) continue;
        out.push_back(r);
    }
    return out;
}

std::optional<int> select_main_landmark(const SpatialConfiguration& config, const Sentence& sent) {
    if (config.landmarks.empty()) return std::nullopt;
    int best = -1;
    int best_depth = 1 << 30;
    int best_pos = 1 << 30;
    for (std::size_t li = 0; li < config.landmarks.size(); ++li) {
        const Span& r = config.landmarks[li];
        int head_depth = 1 << 30;
        int head_pos = 1 << 30;
        for (int k = r.start; k < r.end; ++k) {
            if (sent[static_cast<std::size_t>(k)].pos != Pos::Noun) continue;
            const int d = tree_depth(sent, k);
            if (d < head_depth) {
                head_depth = d;
                head_pos = k;
            }
        }
        if (head_depth < best_depth || (head_depth == best_depth && head_pos < best_pos)) {
            best_depth = head_depth;
            best_pos = head_pos;
            best = static_cast<int>(li);
        }
    }
    return best;
}

ParsedInstruction parse_instruction(const std::string& raw, const MotionLexicon& lexicon) {
    const auto sentences_text = split_sentences(raw);
    std::vector<Sentence> sentences;
    for (const auto& s : sentences_text) {
        auto words = tokenize(s);
        if (!words.empty()) sentences.push_back(analyze_sentence(words));
    }
    return parse_instruction(sentences, lexicon);
}

ParsedInstruction parse_instruction(const std::vector<Sentence>& sentences,
                                    const MotionLexicon& lexicon) {
    if (sentences.empty()) throw std::invalid_argument("parse_instruction: empty instruction");
    std::size_t total_tokens = 0;
    for (const auto& s : sentences) total_tokens += s.size();
    if (total_tokens == 0) throw std::invalid_argument("parse_instruction: empty instruction");

    struct RawConfig {
        int sentence = 0;       // sentence holding the motion (and roles)
        Span tokens;            // global raw coordinates
        std::optional<Span> motion;  // global raw coordinates
    };

    std::vector<int> sent_offset(sentences.size(), 0);
    for (std::size_t i = 1; i < sentences.size(); ++i)
        sent_offset[i] = sent_offset[i - 1] + static_cast<int>(sentences[i - 1].size());

    std::vector<RawConfig> raw_configs;
    for (std::size_t si = 0; si < sentences.size(); ++si) {
        const Sentence& sent = sentences[si];
        if (sent.empty()) continue;
        const auto motions = extract_motion_indicators(sent, lexicon);
        const auto local = split_configurations(sent, motions);
        const int off = sent_offset[si];
        if (motions.empty()) {
            // Verbless sentence: attach backward to the previous
            // configuration when one exists.
            if (!raw_configs.empty()) {
                raw_configs.back().tokens.end = off + static_cast<int>(sent.size());
            } else {
                RawConfig rc;
                rc.sentence = static_cast<int>(si);
                rc.tokens = Span{off, off + static_cast<int>(sent.size())};
                raw_configs.push_back(rc);
            }
            continue;
        }
        for (const auto& c : local) {
            RawConfig rc;
            rc.sentence = static_cast<int>(si);
            rc.tokens = Span{off + c.tokens.start, off + c.tokens.end};
            if (c.motion_indicator)
                rc.motion = Span{off + c.motion_indicator->start, off + c.motion_indicator->end};
            raw_configs.push_back(rc);
        }
    }

    ParsedInstruction out;
    out.sentences = sentences;

    // Role extraction per configuration, then delimiter insertion. Landmark
    // extraction works sentence-locally; a configuration merged across
    // sentences collects landmarks from each overlapped sentence.
    std::vector<Token> stream;
    stream.reserve(total_tokens + raw_configs.size());
    auto global_token = [&](int g) -> const Token& {
        for (std::size_t si = sentences.size(); si-- > 0;) {
            if (g >= sent_offset[si])
                return sentences[si][static_cast<std::size_t>(g - sent_offset[si])];
        }
        throw std::logic_error("bad global token index");
    };

    int inserted = 0;
    for (std::size_t ci = 0; ci < raw_configs.size(); ++ci) {
        const RawConfig& rc = raw_configs[ci];
        SpatialConfiguration cfg;
        cfg.tokens = Span{rc.tokens.start + inserted, rc.tokens.end + inserted};
        if (rc.motion)
            cfg.motion_indicator = Span{rc.motion->start + inserted, rc.motion->end + inserted};

        // First preposition not merged into the motion indicator, if any
        // (the nested configuration's spatial indicator, e.g. "with" in
        // "the table with chair").
        for (int g = rc.tokens.start; g < rc.tokens.end; ++g) {
            if (rc.motion && rc.motion->contains(g)) continue;
            if (global_token(g).pos == Pos::Adp) {
                cfg.spatial_indicator = Span{g + inserted, g + 1 + inserted};
                break;
            }
        }

        // Landmarks, per overlapped sentence, in global raw coordinates.
        struct Cand {
            Span global;
            int depth;
            int pos;
        };
        std::vector<Cand> cands;
        for (std::size_t si = 0; si < sentences.size(); ++si) {
            const int off = sent_offset[si];
            const int send = off + static_cast<int>(sentences[si].size());
            const int lo = std::max(rc.tokens.start, off);
            const int hi = std::min(rc.tokens.end, send);
            if (lo >= hi) continue;
            SpatialConfiguration local;
            local.tokens = Span{lo - off, hi - off};
            if (rc.motion && rc.motion->start >= off && rc.motion->end <= send)
                local.motion_indicator = Span{rc.motion->start - off, rc.motion->end - off};
            auto lms = extract_landmarks(local, sentences[si]);
            for (const auto& lm : lms) {
                int head_depth = 1 << 30, head_pos = 1 << 30;
                for (int k = lm.start; k < lm.end; ++k) {
                    if (sentences[si][static_cast<std::size_t>(k)].pos != Pos::Noun) continue;
                    const int d = tree_depth(sentences[si], k);
                    if (d < head_depth) {
                        head_depth = d;
                        head_pos = off + k;
                    }
                }
                cands.push_back({Span{lm.start + off, lm.end + off}, head_depth, head_pos});
            }
        }
        int main_idx = -1, main_depth = 1 << 30, main_pos = 1 << 30;
        for (std::size_t k = 0; k < cands.size(); ++k) {
            cfg.landmarks.push_back(
                Span{cands[k].global.start + inserted, cands[k].global.end + inserted});
            if (cands[k].depth < main_depth ||
                (cands[k].depth == main_depth && cands[k].pos < main_pos)) {
                main_depth = cands[k].depth;
                main_pos = cands[k].pos;
                main_idx = static_cast<int>(k);
            }
        }
        if (main_idx >= 0) cfg.main_landmark = main_idx;

        for (int g = rc.tokens.start; g < rc.tokens.end; ++g) {
            Token t = global_token(g);
            t.index = static_cast<int>(stream.size());
            stream.push_back(std::move(t));
        }
        Token delim;
        delim.index = static_cast<int>(stream.size());
        delim.text = kDelimiterText;
        delim.lemma = kDelimiterText;
        delim.pos = Pos::Delim;
        delim.head = delim.index;
        delim.deprel = "delim";
        stream.push_back(std::move(delim));
        ++inserted;

        cfg.delimiter_pos = cfg.tokens.end;
        out.configurations.push_back(std::move(cfg));
    }
    out.token_stream = std::move(stream);
    return out;
}

GoldAnnotation to_annotation(const ParsedInstruction& parsed, const std::string& id) {
    GoldAnnotation ann;
    ann.instruction_id = id;
    for (std::size_t i = 0; i < parsed.configurations.size(); ++i) {
        const auto& c = parsed.configurations[i];
        GoldConfiguration g;
        const int ci = static_cast<int>(i);
        g.span = parsed.to_raw(c.tokens, ci);
        if (c.motion_indicator) g.motion = parsed.to_raw(*c.motion_indicator, ci);
        if (c.spatial_indicator) g.spatial = parsed.to_raw(*c.spatial_indicator, ci);
        for (const auto& lm : c.landmarks) g.landmarks.push_back(parsed.to_raw(lm, ci));
        g.main_landmark = c.main_landmark;
        ann.configurations.push_back(std::move(g));
    }
    return ann;
}

ParserReport evaluate_parser(const std::vector<GoldAnnotation>& predicted,
                             const std::vector<GoldAnnotation>& gold) {
    if (predicted.size() != gold.size())
        throw std::invalid_argument("evaluate_parser: prediction/gold length mismatch");
    std::size_t gold_total = 0, span_hits = 0, indicator_hits = 0, landmark_hits = 0;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const auto& g = gold[i];
        const auto& p = predicted[i];
        std::vector<char> used(p.configurations.size(), 0);
        for (const auto& gc : g.configurations) {
            ++gold_total;
            int match = -1;
            for (std::size_t k = 0; k < p.configurations.size(); ++k) {
                if (!used[k] && p.configurations[k].span == gc.span) {
                    match = static_cast<int>(k);
                    break;
                }
            }
            if (match < 0) continue;
            used[static_cast<std::size_t>(match)] = 1;
            ++span_hits;
            const auto& pc = p.configurations[static_cast<std::size_t>(match)];
            if (pc.motion == gc.motion && pc.spatial == gc.spatial) ++indicator_hits;
            if (pc.landmarks == gc.landmarks) ++landmark_hits;
        }
    }
    ParserReport rep;
    rep.instruction_count = gold.size();
    rep.gold_configuration_count = gold_total;
    if (gold_total > 0) {
        rep.configuration_accuracy = static_cast<double>(span_hits) / static_cast<double>(gold_total);
        rep.indicator_accuracy = static_cast<double>(indicator_hits) / static_cast<double>(gold_total);
        rep.landmark_accuracy = static_cast<double>(landmark_hits) / static_cast<double>(gold_total);
    }
    return rep;
}

namespace {

nlohmann::json span_json(const Span& s) { return nlohmann::json::array({s.start, s.end}); }

Span span_from(const nlohmann::json& j) {
    return Span{j.at(0).get<int>(), j.at(1).get<int>()};
}

}  // namespace

std::string annotation_to_json(const GoldAnnotation& ann) {
    nlohmann::json j;
    j["instruction_id"] = ann.instruction_id;
    nlohmann::json cfgs = nlohmann::json::array();
    for (const auto& c : ann.configurations) {
        nlohmann::json jc;
        jc["span"] = span_json(c.span);
        jc["motion"] = c.motion ? span_json(*c.motion) : nlohmann::json(nullptr);
        jc["spatial"] = c.spatial ? span_json(*c.spatial) : nlohmann::json(nullptr);
        nlohmann::json lms = nlohmann::json::array();
        for (const auto& lm : c.landmarks) lms.push_back(span_json(lm));
        jc["landmarks"] = lms;
        jc["main_landmark"] = c.main_landmark ? nlohmann::json(*c.main_landmark)
                                              : nlohmann::json(nullptr);
        cfgs.push_back(jc);
    }
    j["configurations"] = cfgs;
    return j.dump();
}

const std::vector<std::string>& builtin_motion_phrases() {
    static const std::vector<std::string> phrases = {
        // seed examples
        "head straight", "walk through", "walk down", "walk into", "walk inside",
        "turn around", "turn left", "make a left turn", "jump over", "move forward",
        "turn slightly right",
        // symmetric and template forms
        "turn right", "turn slightly left", "make a right turn", "walk up",
        "walk past", "walk to", "walk towards", "walk toward", "walk along",
        "walk across", "walk out", "walk over", "walk straight", "go up",
        "go down", "go through", "go past", "go to", "go into", "go around",
        "go straight", "head up", "head down", "head to", "head towards",
        "move to", "move past", "move up", "move down", "move through",
        "climb up", "climb down", "step over", "keep going", "continue straight",
        "continue forward", "walk around", "go out", "head into", "turn back"};
    return phrases;
}

const MotionLexicon& builtin_lexicon() {
    static const MotionLexicon lex = MotionLexicon::from_phrases(builtin_motion_phrases());
    return lex;
}

GoldAnnotation annotation_from_json(const std::string& line) {
    const auto j = nlohmann::json::parse(line);
    GoldAnnotation ann;
    ann.instruction_id = j.at("instruction_id").get<std::string>();
    for (const auto& jc : j.at("configurations")) {
        GoldConfiguration c;
        c.span = span_from(jc.at("span"));
        if (!jc.at("motion").is_null()) c.motion = span_from(jc.at("motion"));
        if (jc.contains("spatial") && !jc.at("spatial").is_null())
            c.spatial = span_from(jc.at("spatial"));
        for (const auto& lm : jc.at("landmarks")) c.landmarks.push_back(span_from(lm));
        if (!jc.at("main_landmark").is_null()) c.main_landmark = jc.at("main_landmark").get<int>();
        ann.configurations.push_back(std::move(c));
    }
    return ann;
}

}  // namespace spcnav::parse
