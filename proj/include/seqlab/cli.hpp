#pragma once

#include <iosfwd>

#include "seqlab/config.hpp"

namespace seqlab {

// Subcommand entry points; each throws UsageError / DataError /
// DivergenceError, which cli_main maps to exit codes 1 / 2 / 3.
void cmd_train(const RunConfig& config, std::ostream& out);
void cmd_finetune(const RunConfig& config, std::ostream& out);
void cmd_eval(const RunConfig& config, std::ostream& out);
void cmd_tag(const RunConfig& config, const std::string& input_path, std::ostream& out);
void cmd_replicate(const RunConfig& config, std::ostream& out);
void cmd_synth(const RunConfig& config, std::size_t n_tags, std::size_t n_words, double beta,
               std::ostream& out);

int cli_main(int argc, char** argv);

}  // namespace seqlab
