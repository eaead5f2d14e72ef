#pragma once

#include "adaprompt/corpus_index.hpp"
#include "adaprompt/errors.hpp"
#include "adaprompt/eval.hpp"
#include "adaprompt/lm_backend.hpp"
#include "adaprompt/nli.hpp"
#include "adaprompt/pipeline.hpp"
#include "adaprompt/prompt.hpp"
#include "adaprompt/query_builder.hpp"
#include "adaprompt/task_config.hpp"
#include "adaprompt/text.hpp"
#include "adaprompt/verbalizer_augment.hpp"
#include "adaprompt/wire_backend.hpp"
