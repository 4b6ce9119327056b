#include "cotkit/corpus.hpp"

#include "cotkit/common.hpp"
#include "cotkit/tokenizer.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <unordered_set>

using json = nlohmann::json;

namespace cotkit {

std::vector<int> encode_example(const std::string & problem, const std::string & response) {
    std::vector<int> seq;
    seq.push_back(tok::BOS);
    std::vector<int> p = encode(problem);
    seq.insert(seq.end(), p.begin(), p.end());
    std::vector<int> r = encode(response);
    seq.insert(seq.end(), r.begin(), r.end());
    return seq;
}

namespace {

std::vector<ResponseRecord> load_jsonl(const std::string & path, bool response_required) {
    std::ifstream f(path);
    if (!f) {
        throw error("load_corpus: cannot open " + path);
    }
    std::vector<ResponseRecord>     out;
    std::unordered_set<std::string> seen;
    std::string                     line;
    int                             lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        json j;
        try {
            j = json::parse(line);
        } catch (const std::exception & e) {
            throw error("load_corpus: line " + std::to_string(lineno) + ": parse failure: " +
                        e.what());
        }
        ResponseRecord rec;
        auto require = [&](const char * field) -> std::string {
            if (!j.contains(field) || !j.at(field).is_string()) {
                throw error("load_corpus: line " + std::to_string(lineno) +
                            ": missing or non-string field \"" + field + "\"");
            }
            return j.at(field).get<std::string>();
        };
        rec.id      = require("id");
        rec.problem = require("problem");
        if (response_required || j.contains("response")) {
            rec.response = require("response");
        }
        rec.gold_answer = require("gold_answer");
        if (!seen.insert(rec.id).second) {
            throw error("load_corpus: line " + std::to_string(lineno) + ": duplicate id \"" +
                        rec.id + "\"");
        }
        out.push_back(std::move(rec));
    }
    return out;
}

} // namespace

std::vector<ResponseRecord> load_corpus(const std::string & path) {
    return load_jsonl(path, /*response_required=*/true);
}

std::vector<ResponseRecord> load_problems(const std::string & path) {
    return load_jsonl(path, /*response_required=*/false);
}

CotSpan extract_cot_span(const ResponseRecord & record) {
    const std::vector<int> seq = encode_example(record.problem, record.response);
    // search only the response region; a pathological problem statement may
    // legally contain tag text
    const int response_begin = 1 + int(encode(record.problem).size());

    int open = -1;
    for (int i = response_begin; i < int(seq.size()); ++i) {
        if (seq[i] == tok::THINK_OPEN) {
            open = i;
            break;
        }
    }
    if (open < 0) {
        throw error("extract_cot_span: record \"" + record.id + "\" has no <think> tag");
    }
    int close = -1;
    for (int i = open + 1; i < int(seq.size()); ++i) {
        if (seq[i] == tok::THINK_CLOSE) {
            close = i;
            break;
        }
    }
    if (close < 0) {
        throw error("extract_cot_span: record \"" + record.id + "\" has <think> without </think>");
    }
    CotSpan span;
    span.token_start = open + 1;
    span.token_end   = close;
    return span;
}

CorpusPartition partition_by_length(const std::vector<ResponseRecord> & records, int long_min,
                                    int short_max) {
    if (long_min <= 0 || short_max <= 0) {
        throw error("partition: thresholds must be positive");
    }
    if (short_max > long_min) {
        throw error("partition: short_max " + std::to_string(short_max) + " exceeds long_min " +
                    std::to_string(long_min));
    }
    CorpusPartition p;
    p.long_min  = long_min;
    p.short_max = short_max;
    for (const ResponseRecord & rec : records) {
        CotSpan span;
        try {
            span = extract_cot_span(rec);
        } catch (const error & e) {
            p.excluded.emplace_back(rec.id, e.what());
            continue;
        }
        const int len = span.length();
        if (len > long_min) {
            p.long_set.emplace_back(rec, span);
        } else if (len < short_max) {
            p.short_set.emplace_back(rec, span);
        } else {
            p.excluded.emplace_back(rec.id, "length " + std::to_string(len) +
                                                " between short_max and long_min");
        }
    }
    return p;
}

std::string partition_report_json(const CorpusPartition & p) {
    json j;
    j["thresholds"] = {{"long_min", p.long_min}, {"short_max", p.short_max}};
    j["n_long"]     = p.long_set.size();
    j["n_short"]    = p.short_set.size();
    j["n_excluded"] = p.excluded.size();
    json ex         = json::array();
    for (const auto & [id, reason] : p.excluded) {
        ex.push_back({{"id", id}, {"reason", reason}});
    }
    j["excluded"] = ex;
    return j.dump(2) + "\n";
}

void write_partition_report(const CorpusPartition & p, const std::string & path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) {
        throw error("partition report: cannot write " + path);
    }
    f << partition_report_json(p);
}

std::string dataset_fingerprint(const std::vector<std::pair<ResponseRecord, CotSpan>> & set) {
    Fnv1a f;
    for (const auto & [rec, span] : set) {
        f.update(rec.id);
        const int32_t se[2] = {span.token_start, span.token_end};
        f.update(se, sizeof(se));
    }
    return f.hex();
}

} // namespace cotkit
