#pragma once

#include <string>
#include <vector>

namespace cotkit {

struct ResponseRecord {
    std::string id;
    std::string problem;
    std::string response;
    std::string gold_answer;
};

// Token span strictly between the first <think> and the first subsequent
// </think> of the response, indexed into encode_example(problem, response).
struct CotSpan {
    int token_start = 0;  // inclusive
    int token_end   = 0;  // exclusive
    int length() const { return token_end - token_start; }
};

// [BOS] + encode(problem) + encode(response); every span and teacher-forced
// pass in the pipeline is built over this sequence
std::vector<int> encode_example(const std::string & problem, const std::string & response);

// JSONL, one {"id","problem","response","gold_answer"} object per line
std::vector<ResponseRecord> load_corpus(const std::string & path);

// same format but "response" may be absent (problems feed generation, not
// teacher forcing)
std::vector<ResponseRecord> load_problems(const std::string & path);

CotSpan extract_cot_span(const ResponseRecord & record);

struct CorpusPartition {
    std::vector<std::pair<ResponseRecord, CotSpan>> long_set;
    std::vector<std::pair<ResponseRecord, CotSpan>> short_set;
    std::vector<std::pair<std::string, std::string>> excluded;  // (id, reason)
    int long_min  = 0;
    int short_max = 0;
};

// Strict thresholds: long needs length > long_min, short needs
// length < short_max; everything else (boundaries, missing or malformed
// tags) lands in excluded with a reason.
CorpusPartition partition_by_length(const std::vector<ResponseRecord> & records,
                                    int long_min = 1000, int short_max = 100);

std::string partition_report_json(const CorpusPartition & p);
void        write_partition_report(const CorpusPartition & p, const std::string & path);

// content hash over (id, span) pairs in set order, recorded as provenance
std::string dataset_fingerprint(const std::vector<std::pair<ResponseRecord, CotSpan>> & set);

} // namespace cotkit
