#include "phytune/errors.hpp"

namespace phytune {

const char* to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::precondition: return "precondition";
        case ErrorKind::client: return "client";
        case ErrorKind::parse: return "parse";
        case ErrorKind::validation: return "validation";
        case ErrorKind::tag: return "tag";
        case ErrorKind::json: return "json";
        case ErrorKind::empty_support: return "empty_support";
        case ErrorKind::shape: return "shape";
        case ErrorKind::schedule: return "schedule";
        case ErrorKind::range: return "range";
        case ErrorKind::empty_fact_list: return "empty_fact_list";
        case ErrorKind::negative_component: return "negative_component";
        case ErrorKind::incompatible_model: return "incompatible_model";
        case ErrorKind::empty_input: return "empty_input";
        case ErrorKind::io: return "io";
        case ErrorKind::classifier: return "classifier";
        case ErrorKind::config: return "config";
        case ErrorKind::divergence: return "divergence";
        case ErrorKind::template_error: return "template";
    }
    return "unknown";
}

}  // namespace phytune
