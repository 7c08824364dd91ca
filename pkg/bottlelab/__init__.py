# This file is part of the Character Bottleneck Laboratory (bottlelab).
#
# Copyright (C) 2026 The bottlelab developers.
#
# bottlelab is free software; you can redistribute it and/or modify it under
# the terms of the MIT License; see LICENSE file for more details.
