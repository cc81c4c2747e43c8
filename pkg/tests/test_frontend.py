"""Source parsing, lowering, and transform-script reading."""

import pytest

from helpers import corpus_text

from loopforge import commands as cmd
from loopforge import expr as ex
from loopforge import kernel as kn
from loopforge.diagnostics import (
    BadArgument,
    ScriptSyntaxError,
    SourceSyntaxError,
    UnknownCommand,
    UnsupportedConstruct,
)
from loopforge.frontend import lower_to_kernels, parse_source, parse_transform_script


@pytest.fixture(scope="module")
def corpus_unit():
    return parse_source(corpus_text())


@pytest.fixture(scope="module")
def corpus_kernels(corpus_unit):
    return lower_to_kernels(corpus_unit)


class TestParseSource:
    def test_corpus_structure(self, corpus_unit):
        assert [s.name for s in corpus_unit.subroutines] == [
            "strong_volume_r", "strong_volume_s"]
        assert corpus_unit.transform_block is not None
        assert "fuse suffixes=_r,_s" in corpus_unit.transform_block
        tags = {t for t, _, _ in corpus_unit.tagged_regions}
        assert tags == {"local_prep"}
        assert len(corpus_unit.tagged_regions) == 3

    def test_empty_file(self):
        unit = parse_source("")
        assert unit.subroutines == [] and unit.transform_block is None

    def test_nonunit_lower_bound_rejected(self):
        src = """subroutine f(n, a)
  integer :: n
  integer :: i
  real, dimension(n) :: a
  do i = 2, n
    a(i) = 1.0
  end do
end subroutine
"""
        with pytest.raises(UnsupportedConstruct):
            parse_source(src)

    def test_stride_rejected(self):
        src = """subroutine f(n, a)
  integer :: n
  integer :: i
  real, dimension(n) :: a
  do i = 1, n, 2
    a(i) = 1.0
  end do
end subroutine
"""
        with pytest.raises(UnsupportedConstruct):
            parse_source(src)

    def test_if_rejected(self):
        src = """subroutine f(n)
  integer :: n
  if (n > 0) then
end subroutine
"""
        with pytest.raises(UnsupportedConstruct) as err:
            parse_source(src)
        assert "line 3" in str(err.value)

    def test_unbalanced_region(self):
        src = """subroutine f(n, a)
  integer :: n
  real, dimension(n) :: a
!$loopy begin tagged: prep
end subroutine
"""
        with pytest.raises(SourceSyntaxError):
            parse_source(src)

    def test_syntax_error_carries_line(self):
        src = """subroutine f(n, a)
  integer :: n
  real, dimension(n) :: a
  a(1) = 1.0 +
end subroutine
"""
        with pytest.raises(SourceSyntaxError) as err:
            parse_source(src)
        assert "line 4" in str(err.value)


class TestLowering:
    def test_minimal_kernel(self):
        src = """subroutine add_one(Ne, Nq, a, out)
  integer :: Ne, Nq
  integer :: e, i
  real, dimension(Nq, Ne) :: a
  real, dimension(Nq, Ne) :: out
  do e = 1, Ne
    do i = 1, Nq
      out(i, e) = a(i, e) + 1.0
    end do
  end do
end subroutine
"""
        (k,) = lower_to_kernels(parse_source(src))
        assert k.domain.names() == ["e", "i"]
        assert k.domain.extent("e") == ex.var("Ne")
        assert len(k.instructions) == 1
        insn = k.instructions[0]
        assert insn.within_inames == {"e", "i"}
        assert insn.rhs == ex.add(ex.sub("a", "i", "e"), ex.lit(1.0, ex.F32))
        assert not insn.is_update
        assert kn.check_consistency(k) == []

    def test_corpus_domain_projection(self, corpus_kernels):
        r, s = corpus_kernels
        proj = kn.domain_projection(r, {"e", "i", "j", "k", "n"})
        assert proj == {
            "e": ex.var("Ne"), "i": ex.var("Nq"), "j": ex.var("Nq"),
            "k": ex.var("Nq"), "n": ex.var("Nq")}
        # fusion precondition: equal projections on the shared subset
        assert proj == kn.domain_projection(s, {"e", "i", "j", "k", "n"})
        assert "m" in s.domain and "m" not in r.domain

    def test_update_detection(self, corpus_kernels):
        r, s = corpus_kernels
        updates = [i for i in r.instructions if i.is_update]
        assert len(updates) == 8
        for u in updates:
            assert u.assignee == "rhsq"
            # the self-read is stripped from the stored rhs
            assert "rhsq" not in ex.referenced_arrays(u.rhs)
        s_updates = [i for i in s.instructions if i.is_update]
        assert len(s_updates) == 16

    def test_region_tags(self, corpus_kernels):
        r, s = corpus_kernels
        tagged_r = [i for i in r.instructions if "local_prep" in i.tags]
        assert {i.assignee for i in tagged_r} == {
            "rho", "u1", "u2", "u3", "th", "qt1", "qt2", "qt3",
            "rhoinv", "p", "g1", "g2", "g3"}
        assert all("local_prep" not in i.tags
                   for i in r.instructions if i.assignee.startswith("flx"))
        tagged_s = [i for i in s.instructions if "local_prep" in i.tags]
        assert len(tagged_s) == 26  # gather block + point block

    def test_one_based_normalization(self, corpus_kernels):
        r, _ = corpus_kernels
        rho = next(i for i in r.instructions if i.assignee == "rho")
        # q(n, j, k, 1, e) becomes q[n, j, k, 0, e]
        assert rho.rhs == ex.sub("q", "n", "j", "k", 0, "e")

    def test_dependencies_follow_lexical_conflicts(self, corpus_kernels):
        r, s = corpus_kernels
        by_assignee = {}
        for i in r.instructions:
            by_assignee.setdefault(i.assignee, []).append(i)
        rhoinv = by_assignee["rhoinv"][0]
        rho = by_assignee["rho"][0]
        assert rho.id in rhoinv.depends_on
        flxu = by_assignee["flxu"][0]
        assert {by_assignee[v][0].id for v in ("g1", "u1")} <= flxu.depends_on
        # updates of distinct components do not conflict
        upds = by_assignee["rhsq"]
        assert len(upds) == 8
        assert upds[0].id not in upds[1].depends_on
        # in the s kernel, the scatter update of component b depends on the
        # gather update of component b (overlapping rhsq elements)
        s_upds = [i for i in s.instructions if i.assignee == "rhsq"]
        gather, scatter = s_upds[:8], s_upds[8:]
        for gb, sb in zip(gather, scatter):
            assert gb.id in sb.depends_on

    def test_dump_round_trip(self, corpus_kernels):
        for k in corpus_kernels:
            assert kn.parse_kernel_dump(kn.dump_kernel(k)) == k

    def test_triangular_loop_rejected(self):
        src = """subroutine f(n, a)
  integer :: n
  integer :: i, j
  real, dimension(n, n) :: a
  do i = 1, n
    do j = 1, i
      a(i, j) = 1.0
    end do
  end do
end subroutine
"""
        from loopforge.diagnostics import NonRectangularLoop
        with pytest.raises(NonRectangularLoop):
            lower_to_kernels(parse_source(src))

    def test_loop_var_reuse_same_extent_ok(self):
        src = """subroutine f(n, a)
  integer :: n
  integer :: i
  real, dimension(n) :: a
  do i = 1, n
    a(i) = 1.0
  end do
  do i = 1, n
    a(i) = a(i) + 1.0
  end do
end subroutine
"""
        (k,) = lower_to_kernels(parse_source(src))
        assert k.domain.names() == ["i"]
        assert k.instructions[1].is_update


class TestTransformScript:
    def test_fuse(self):
        (c,) = parse_transform_script("fuse suffixes=_r,_s")
        assert c == cmd.Fuse(("_r", "_s"))

    def test_empty(self):
        assert parse_transform_script("") == []
        assert parse_transform_script("# only a comment\n\n") == []

    def test_tag_inames_three_bindings(self):
        (c,) = parse_transform_script("tag_inames e=core.0 i=lane.0 j=lane.1")
        assert c == cmd.TagInames((("e", "core.0"), ("i", "lane.0"),
                                   ("j", "lane.1")))

    def test_quoted_match_query(self):
        (c,) = parse_transform_script(
            'rename_iname old=n new=n_f0 within="reads:flux_f0"')
        assert c == cmd.RenameIname("n", "n_f0", "reads:flux_f0", False)

    def test_unknown_command(self):
        with pytest.raises(UnknownCommand):
            parse_transform_script("frobnicate a=1")

    def test_bad_argument(self):
        with pytest.raises(BadArgument):
            parse_transform_script("fuse nope=1")
        with pytest.raises(BadArgument):
            parse_transform_script("split_array_axis array=q axis=field factor=x")

    def test_syntax_error(self):
        with pytest.raises(ScriptSyntaxError):
            parse_transform_script('fuse suffixes="unterminated')

    def test_corpus_block_parses(self, corpus_unit):
        cmds = parse_transform_script(corpus_unit.transform_block)
        assert isinstance(cmds[0], cmd.Fuse)
        kinds = {type(c) for c in cmds}
        assert cmd.CollectCommonFactors in kinds
        assert cmd.BufferArray in kinds
