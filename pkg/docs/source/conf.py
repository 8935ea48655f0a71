#
# perpex documentation build configuration file
#
# This file is execfile()d with the current directory set to its containing dir.

import sys
import os

import sphinx.ext.autodoc

sys.path.insert(0, os.path.abspath('../..'))

import perpex

# -- General configuration ------------------------------------------------

needs_sphinx = '1.2'

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.intersphinx',
    'sphinx.ext.mathjax',
    'sphinx.ext.viewcode'
]

sphinx.ext.autodoc.DataDocumenter.member_order = 5
sphinx.ext.autodoc.AttributeDocumenter.member_order = 6
sphinx.ext.autodoc.InstanceAttributeDocumenter.member_order = 7
autodoc_member_order = 'groupwise'
autodoc_default_flags = ['members', 'show-inheritance']

intersphinx_mapping = {
    'python': ('https://docs.python.org/3', None),
    'numpy': ('https://numpy.org/doc/stable', None),
    'scipy': ('https://docs.scipy.org/doc/scipy', None),
}

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = 'perpex'
copyright = '2014, V G'

version = perpex.__version__
release = perpex.__version__

exclude_patterns = []

pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'alabaster'
html_static_path = []
htmlhelp_basename = 'perpexdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_documents = [
    ('index', 'perpex.tex', 'perpex Documentation', 'V G', 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    ('index', 'perpex', 'perpex Documentation', ['V G'], 1)
]
