# Copyright (c) 2026 seglex developers
#
# Permission is hereby granted, free of charge, to any person obtaining a copy
# of this software and associated documentation files (the "Software"), to deal
# in the Software without restriction, including without limitation the rights
# to use, copy, modify, merge, publish, distribute, sublicense, and/or sell
# copies of the Software, and to permit persons to whom the Software is
# furnished to do so, subject to the following conditions:
#
# The above copyright notice and this permission notice shall be included in all
# copies or substantial portions of the Software.
#
# THE SOFTWARE IS PROVIDED "AS IS", WITHOUT WARRANTY OF ANY KIND, EXPRESS OR
# IMPLIED, INCLUDING BUT NOT LIMITED TO THE WARRANTIES OF MERCHANTABILITY,
# FITNESS FOR A PARTICULAR PURPOSE AND NONINFRINGEMENT. IN NO EVENT SHALL THE
# AUTHORS OR COPYRIGHT HOLDERS BE LIABLE FOR ANY CLAIM, DAMAGES OR OTHER
# LIABILITY, WHETHER IN AN ACTION OF CONTRACT, TORT OR OTHERWISE, ARISING FROM,
# OUT OF OR IN CONNECTION WITH THE SOFTWARE OR THE USE OR OTHER DEALINGS IN THE
# SOFTWARE.

import os

from seglex import errors


class Converter(object):
    """
    A converter turns a raw command line argument into a usable value.

    Converters are used as parameter annotations of command functions, and must have a convert(value, ctx)
    classmethod. If the value can't be converted, it should raise seglex.errors.WrongType
    """

    @classmethod
    def convert(cls, value, ctx):
        return value


# basic converters


class String(Converter):
    """String converter. Just returns the raw value."""

    @classmethod
    def convert(cls, value, ctx):
        return value


class Number(Converter):
    """Number converter. Will return int or float"""

    @classmethod
    def convert(cls, value, ctx):
        try:
            return float(value) if any(c in value for c in ".eE") else int(value)
        except ValueError:
            raise errors.WrongType("`{}` isn't a number.".format(value))


class Integer(Converter):
    @classmethod
    def convert(cls, value, ctx):
        try:
            return int(value)
        except ValueError:
            raise errors.WrongType("`{}` isn't an integer.".format(value))


class NumberList(Converter):
    """
    Comma separated numbers, e.g. ``10,20,50``
    """

    @classmethod
    def convert(cls, value, ctx):
        items = [item.strip() for item in value.split(",") if item.strip()]
        if not items:
            raise errors.WrongType("`{}` isn't a list of numbers.".format(value))

        return [Number.convert(item, ctx) for item in items]


class Flag(Converter):
    """On/off switch. Flags take no value on the command line."""

    @classmethod
    def convert(cls, value, ctx):
        return bool(value)


# paths


class ExistingFile(Converter):
    """Path to a file that must already exist."""

    @classmethod
    def convert(cls, value, ctx):
        if not os.path.isfile(value):
            raise errors.WrongType("`{}` isn't an existing file.".format(value))

        return value


class Directory(Converter):
    """Path to an output directory. It's created when needed; an existing regular file is refused."""

    @classmethod
    def convert(cls, value, ctx):
        if os.path.exists(value) and not os.path.isdir(value):
            raise errors.WrongType("`{}` exists and isn't a directory.".format(value))

        return value
