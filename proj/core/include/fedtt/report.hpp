#pragma once

#include <string>
#include <vector>

#include "fedtt/fpt.hpp"

namespace fedtt {

// Key-value text document, one metric per line; byte-stable for a fixed
// seed in deterministic mode.
std::string report_to_text(const RunReport& report);

// Machine-readable companion (JSON).
std::string report_to_json(const RunReport& report);

// Transcript file: one line per entry, "kind emitted round client bytes v0 v1 ...".
void write_transcript(const std::vector<TranscriptEntry>& entries, const std::string& path);
std::vector<TranscriptEntry> read_transcript(const std::string& path);

// Replays the masking identity over a logged transcript: re-derives every
// aggregate from the masks and the previous aggregate and checks it against
// the logged one. Returns the recomputed aggregate checksum.
double replay_transcript_checksum(const std::vector<TranscriptEntry>& entries,
                                  std::size_t clients, double tolerance = 1e-9);

}  // namespace fedtt
