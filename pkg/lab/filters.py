import django_filters
from rest_framework import filters

from lab.models import Experiment, Run


class ExperimentFilter(django_filters.FilterSet):
    created_at = django_filters.DateFilter(field_name='created_at__date')

    class Meta:
        model = Experiment
        fields = {
            'command': ('exact',),
            'status': ('exact',),
            'created_at': ('lt', 'gt', 'exact'),
        }


class RunFilter(django_filters.FilterSet):
    experiment = django_filters.UUIDFilter(field_name='experiment__experiment_id')

    class Meta:
        model = Run
        fields = {
            'algorithm': ('exact',),
            'seed': ('exact', 'lt', 'gt'),
            'status': ('exact',),
        }


class CompletedFilter(filters.BaseFilterBackend):
    def filter_queryset(self, request, queryset, view):
        return queryset.filter(status=Experiment.StatusChoices.COMPLETED)
