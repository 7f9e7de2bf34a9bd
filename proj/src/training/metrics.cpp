#include <ostream>

#include "scpc/training.hpp"

namespace scpc {

nlohmann::json to_json(const MetricsRecord& m) {
  return {
      {"step", m.step},
      {"epoch", m.epoch},
      {"texture_losses", m.texture_losses},
      {"combined_loss", m.combined_loss},
      {"mean_positive_logit", m.mean_positive_logit},
      {"mean_negative_logit", m.mean_negative_logit},
      {"wall_time_ms", m.wall_time_ms},
  };
}

void JsonlMetricsWriter::operator()(const MetricsRecord& m) {
  out_ << to_json(m).dump() << '\n';
  out_.flush();
}

}  // namespace scpc
