#pragma once

// Line-oriented pulse-sequence scripts:
//
//   pair 0 -1            # tracked nuclear pair (reference, target)
//   evolve 1.148ms ms=0  # free evolution; ms= is optional after the first
//   flip-e ms=+1         # electronic pi pulse to the given m_S
//   evolve 252us
//   flip-n               # nuclear echo pi pulse
//
// A script describes exactly one PulseSequence. Its kind is inferred: one
// segment is a Ramsey (double-quantum for pair -1 1), one flip-e between two
// evolutions an unbalanced echo, one flip-n between two evolutions a nuclear echo.

#include <array>
#include <charconv>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "error.hpp"
#include "sequence_engine.hpp"
#include "units.hpp"

namespace nvecho {

namespace detail {

struct Token {
    std::string_view text;
    int column = 1; // 1-based, in bytes
};

inline std::vector<Token> tokenize_line(std::string_view line) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < line.size()) {
        if (line[i] == '#') break;
        if (line[i] == ' ' || line[i] == '\t' || line[i] == '\r') {
            ++i;
            continue;
        }
        const std::size_t start = i;
        while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' && line[i] != '#') ++i;
        out.push_back({line.substr(start, i - start), static_cast<int>(start + 1)});
    }
    return out;
}

inline int parse_int_token(const Token& tok, int line) {
    int v = 0;
    std::string_view s = tok.text;
    if (!s.empty() && s.front() == '+') s.remove_prefix(1);
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || ptr != s.data() + s.size()) {
        throw ParseError("expected an integer, got '" + std::string(tok.text) + "'", line, tok.column);
    }
    return v;
}

inline int parse_quantum_token(const Token& tok, int line, const char* what) {
    const int v = parse_int_token(tok, line);
    if (!valid_quantum_number(v)) {
        throw ParseError(std::string("invalid ") + what + " '" + std::string(tok.text) + "' (must be -1, 0 or +1)", line,
                         tok.column);
    }
    return v;
}

inline int parse_ms_option(const Token& tok, int line) {
    if (tok.text.substr(0, 3) != "ms=") {
        throw ParseError("expected ms=<-1|0|+1>, got '" + std::string(tok.text) + "'", line, tok.column);
    }
    Token value{tok.text.substr(3), tok.column + 3};
    return parse_quantum_token(value, line, "m_S");
}

} // namespace detail

inline PulseSequence parse_sequence_script(std::string_view text) {
    std::optional<LevelPair> pair;
    std::vector<Segment> segments;
    int ms = 0;
    bool ms_known = false;
    bool inverted = false;
    int e_flips = 0, n_flips = 0;
    std::optional<double> flip_at;
    bool pending_flip = false;
    int last_line = 1, pending_line = 1, pending_col = 1;

    int lineno = 0;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const auto nl = text.find('\n', pos);
        const auto line = text.substr(pos, nl == std::string_view::npos ? std::string_view::npos : nl - pos);
        pos = nl == std::string_view::npos ? text.size() + 1 : nl + 1;
        ++lineno;
        const auto toks = detail::tokenize_line(line);
        if (toks.empty()) continue;
        last_line = lineno;
        const auto& head = toks.front();
        const auto arity = [&](std::size_t lo, std::size_t hi) {
            if (toks.size() - 1 < lo || toks.size() - 1 > hi) {
                const auto& at = toks.size() > hi + 1 ? toks[hi + 1] : head;
                throw ParseError("wrong number of arguments to '" + std::string(head.text) + "'", lineno, at.column);
            }
        };

        if (head.text == "pair") {
            arity(2, 2);
            if (pair) throw ParseError("pair given twice", lineno, head.column);
            if (!segments.empty()) throw ParseError("pair must precede the first evolve", lineno, head.column);
            LevelPair p{detail::parse_quantum_token(toks[1], lineno, "m_I"), detail::parse_quantum_token(toks[2], lineno, "m_I")};
            if (p.reference == p.target) throw ParseError("pair levels must differ", lineno, toks[2].column);
            pair = p;
        } else if (head.text == "evolve") {
            arity(1, 2);
            if (!pair) throw ParseError("evolve before pair", lineno, head.column);
            double duration = 0.0;
            try {
                duration = parse_quantity(toks[1].text, Dimension::time).value;
            } catch (const DomainError& e) {
                throw ParseError(std::string(e.what()), lineno, toks[1].column);
            }
            if (duration < 0.0) {
                throw ParseError("negative duration '" + std::string(toks[1].text) + "'", lineno, toks[1].column);
            }
            if (toks.size() == 3) {
                const int m = detail::parse_ms_option(toks[2], lineno);
                if (ms_known && m != ms) {
                    throw ParseError("m_S changes from " + std::to_string(ms) + " to " + std::to_string(m) + " without flip-e",
                                     lineno, toks[2].column);
                }
                ms = m;
            } else if (!ms_known && segments.empty()) {
                throw ParseError("first evolve needs ms=<-1|0|+1>", lineno, head.column);
            }
            ms_known = true;
            segments.push_back(Segment{duration, ms, {}, inverted});
            pending_flip = false;
        } else if (head.text == "flip-e") {
            arity(1, 1);
            if (segments.empty()) throw ParseError("flip-e before the first evolve", lineno, head.column);
            const int m = detail::parse_ms_option(toks[1], lineno);
            if (m == ms) throw ParseError("flip-e must change m_S (already " + std::to_string(ms) + ")", lineno, toks[1].column);
            ms = m;
            ++e_flips;
            pending_flip = true;
            pending_line = lineno;
            pending_col = head.column;
        } else if (head.text == "flip-n") {
            arity(0, 0);
            if (segments.empty()) throw ParseError("flip-n before the first evolve", lineno, head.column);
            double t = 0.0;
            for (const auto& s : segments) t += s.duration;
            flip_at = t;
            inverted = !inverted;
            ++n_flips;
            pending_flip = true;
            pending_line = lineno;
            pending_col = head.column;
        } else {
            throw ParseError("unknown directive '" + std::string(head.text) + "'", lineno, head.column);
        }
    }

    if (!pair) throw ParseError("missing pair directive", last_line, 1);
    if (segments.empty()) throw ParseError("missing evolve directive", last_line, 1);
    if (pending_flip) throw ParseError("pulse must be followed by an evolve", pending_line, pending_col);

    PulseSequence seq;
    seq.pair = *pair;
    seq.segments = segments;
    if (e_flips == 0 && n_flips == 0) {
        if (segments.size() != 1) throw ParseError("consecutive evolves without a pulse; merge them", last_line, 1);
        seq.kind = pair->is_double_quantum() ? SequenceKind::dq_ramsey : SequenceKind::ramsey;
    } else if (e_flips == 1 && n_flips == 0 && segments.size() == 2) {
        seq.kind = SequenceKind::unbalanced_echo;
    } else if (n_flips == 1 && e_flips == 0 && segments.size() == 2) {
        seq.kind = SequenceKind::nuclear_echo;
        seq.nuclear_flip_at = flip_at;
    } else {
        throw ParseError("unsupported pulse structure: use one evolve, or two evolves around a single flip-e or flip-n",
                         last_line, 1);
    }
    try {
        seq.validate();
    } catch (const DomainError& e) {
        throw ParseError(e.what(), last_line, 1);
    }
    return seq;
}

/// Shortest duration text among ms/us/s that parses back to the same value.
inline std::string format_duration_token(double seconds) {
    static constexpr std::array<std::pair<const char*, double>, 3> units{{{"ms", 1e-3}, {"us", 1e-6}, {"s", 1.0}}};
    std::string best;
    for (const auto& [symbol, scale] : units) {
        const std::string candidate = format_number(seconds / scale) + symbol;
        if (parse_quantity(candidate, Dimension::time).value != seconds) continue;
        if (best.empty() || candidate.size() < best.size()) best = candidate;
    }
    return best;
}

inline std::string format_ms(int ms) { return ms > 0 ? "+" + std::to_string(ms) : std::to_string(ms); }

/// Canonical script; parse_sequence_script(print_sequence_script(s)) == s.
inline std::string print_sequence_script(const PulseSequence& seq) {
    seq.validate();
    std::string out = "pair " + std::to_string(seq.pair.reference) + " " + std::to_string(seq.pair.target) + "\n";
    for (std::size_t i = 0; i < seq.segments.size(); ++i) {
        const auto& s = seq.segments[i];
        if (i > 0) {
            const auto& prev = seq.segments[i - 1];
            if (s.nuclear_inverted != prev.nuclear_inverted) out += "flip-n\n";
            if (s.ms != prev.ms) out += "flip-e ms=" + format_ms(s.ms) + "\n";
        }
        out += "evolve " + format_duration_token(s.duration) + " ms=" + format_ms(s.ms) + "\n";
    }
    return out;
}

} // namespace nvecho
