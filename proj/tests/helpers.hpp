#pragma once

#include <string>

#include "navkit/dom.hpp"

inline std::string data_path(const std::string& rel) {
    return std::string(NAVKIT_DATA_DIR) + "/" + rel;
}

inline std::string fixture_path(const std::string& rel) {
    return data_path("fixtures/" + rel);
}

/// parse → prune → assign, with the shipped defaults.
inline navkit::PrunedDom process_html(const std::string& html) {
    return navkit::assign_node_ids(
        navkit::prune(navkit::parse_html(html), navkit::default_prune_config()));
}
