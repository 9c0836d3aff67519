#pragma once

#include "decomind/errors.hpp"
#include "decomind/hash.hpp"
#include "decomind/image.hpp"
#include "decomind/model.hpp"
#include "decomind/catalog.hpp"
#include "decomind/retrieval.hpp"
#include "decomind/layout.hpp"
#include "decomind/promptgen.hpp"
#include "decomind/generation.hpp"
#include "decomind/generation_http.hpp"
#include "decomind/evaluation.hpp"
#include "decomind/service/config.hpp"
#include "decomind/service/store.hpp"
#include "decomind/service/service.hpp"
#include "decomind/service/api.hpp"
