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

import sys
from functools import wraps
from inspect import Parameter, Signature

from seglex import converters, errors


class Context(object):
    """
    Command context, passed to command functions for easier handling

    :attr Cli cli: The command line interface running the command
    :attr stdout: Stream command output goes to
    """

    def __init__(self, cli, stdout=None):
        self.cli = cli
        self.stdout = stdout or sys.stdout

    def send(self, text):
        """Writes a line of command output."""

        print(text, file=self.stdout)


def _parameters(signature):
    return list(signature.parameters.values())[2:]  # ignore self and ctx


def _converter(param):
    return converters.String if param.annotation == Parameter.empty else param.annotation


def flag_name(param):
    return "--" + param.name.replace("_", "-")


def add_arguments(parser, signature):
    """
    Declares a command's parameters on an argparse parser.

    Positional parameters become positional arguments, optional when they have a default; keyword-only
    parameters become ``--flags``. Values stay raw strings until :func:`convert_arguments`.
    """

    for param in _parameters(signature):
        if param.kind == Parameter.KEYWORD_ONLY:
            if _converter(param) is converters.Flag:
                parser.add_argument(flag_name(param), dest=param.name, action="store_true", default=None)
            else:
                parser.add_argument(flag_name(param), dest=param.name, default=None, metavar=param.name.upper())
        elif param.kind == Parameter.VAR_POSITIONAL:
            parser.add_argument(param.name, nargs="*")
        else:
            parser.add_argument(param.name, nargs=None if param.default == Parameter.empty else "?", default=None)


def convert_arguments(namespace, signature, ctx):
    """
    This is used internally by the CLI.

    Converts parsed arguments for a command against the command's signature using converters.

    :param argparse.Namespace namespace: Parsed, unconverted arguments
    :param Signature signature: Function signature
    :param Context ctx: Command context
    :return: (list of positional values, dict of keyword values)
    """

    args = []
    kwargs = {}
    missing = []

    for param in _parameters(signature):
        raw = getattr(namespace, param.name, None)
        converter = _converter(param)

        if param.kind == Parameter.VAR_POSITIONAL:
            args.extend(converter.convert(value, ctx) for value in raw or [])
            continue

        if raw is None:
            if param.default == Parameter.empty:
                missing.append(param.name)
                continue
            value = param.default
        else:
            value = converter.convert(raw, ctx)

        if param.kind == Parameter.KEYWORD_ONLY:
            kwargs[param.name] = value
        else:
            args.append(value)

    if missing:
        raise errors.MissingArguments("missing required argument(s): {}".format(", ".join(missing)))

    return args, kwargs


def help_message(sig, doc):
    msg = ""

    for arg in _parameters(sig):
        type_ = _converter(arg).__name__

        if arg.kind == Parameter.KEYWORD_ONLY:
            msg += "[{}] ".format(flag_name(arg)) if type_ == "Flag" else "[{} <{}>] ".format(flag_name(arg), type_)
        elif arg.kind == Parameter.VAR_POSITIONAL:
            msg += "*<{}: {}> ".format(arg.name, type_)
        elif arg.default != Parameter.empty:
            msg += "[<{}: {}>] ".format(arg.name, type_)
        else:
            msg += "<{}: {}> ".format(arg.name, type_)

    return "{}\n\n{}".format(msg.rstrip(), _dedent(doc))


def _dedent(doc):
    lines = [line.strip() for line in (doc or "").strip().splitlines()]

    return "\n".join(lines)


def command(*cmd):
    """
    Decorator used to create commands.

    :param *cmd: The name(s) of the command, used to call it.
    """

    def real_decorator(func):
        signature = Signature.from_callable(func)  # function signature is used to build and convert arguments

        @wraps(func)
        def real_command(self_, ctx, namespace):
            args, kwargs = convert_arguments(namespace, signature, ctx)

            returned = func(self_, ctx, *args, **kwargs)

            # print return value if it's a string
            if isinstance(returned, str):
                ctx.send(returned)

            return returned

        real_command.is_command = True
        real_command.command = cmd
        real_command.signature = signature
        real_command.description = _dedent(func.__doc__).split("\n")[0]
        real_command.help_message = help_message(signature, func.__doc__)

        return real_command

    return real_decorator
